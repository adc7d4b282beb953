// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Command-line front end. Subcommands:
//
//   bound        bound_report.csv + pi_shape.csv for a seeded test vector
//   hist         per-checkpoint histograms of a worker's update vector
//                during a short training run (hist_t<iter>.csv)
//   train        error-feedback data-parallel training; train_iters.csv +
//                train_epochs.csv
//   bench        compressor cost comparison; bench.csv
//   randk-check  Monte Carlo check of the uniform-selection energy
//                expectation; randk_check.csv
//
// Contract: seeds are mandatory (no time-based seeding); identical flags
// reproduce byte-identical CSVs (sole exception: the wall_ms_median column
// of bench.csv is machine time); all files go under --out (flag, else
// $SPARSECOMM_OUT, else ./out), which is created and write-probed up front.
// Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
// 2 usage or config error.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "sparsecomm/analysis.hpp"
#include "sparsecomm/bench.hpp"
#include "sparsecomm/compressors.hpp"
#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/csv.hpp"
#include "sparsecomm/ef_engine.hpp"
#include "sparsecomm/models_data.hpp"

namespace fs = std::filesystem;

namespace {

using namespace sparsecomm;

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string out;
  std::uint64_t seed = 0;
  bool verbose = false;
};

[[nodiscard]] std::string default_out() {
  const char* env = std::getenv("SPARSECOMM_OUT");
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string("./out");
}

void add_common(CLI::App* sub, CommonOpts& c) {
  c.out = default_out();
  sub->add_option("--out", c.out, "Output directory for CSVs ($SPARSECOMM_OUT, else ./out)")
      ->capture_default_str();
  sub->add_option("--seed", c.seed, "RNG seed; mandatory, never time-based")->required();
  sub->add_flag("-v,--verbose", c.verbose, "Progress notes on stderr");
  // Lets --config (and --help/--version) appear after the subcommand name:
  // flags the subcommand does not know are retried against the main app.
  sub->fallthrough(true);
}

// Creates the output directory and proves it is writable before any work.
[[nodiscard]] fs::path prepare_out_dir(const std::string& out) {
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + out + "': " + ec.message());
  }
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream f(probe, std::ios::binary | std::ios::trunc);
    if (!f || !(f << 'x')) {
      throw IoError("output directory '" + out + "' is not writable");
    }
  }
  fs::remove(probe, ec);
  return dir;
}

void vlog(const CommonOpts& c, const std::string& msg) {
  if (c.verbose) std::cerr << "[sparsecomm] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

struct BoundOpts {
  CommonOpts common;
  Index d = 100000;
  std::string dist = "gaussian";
  std::vector<Index> ks{10, 100, 1000, 10000};
};

void run_bound(const BoundOpts& o) {
  const fs::path dir = prepare_out_dir(o.common.out);
  const VecX<double> u = make_test_vector(parse_test_dist(o.dist), o.d, o.common.seed);
  vlog(o.common, "generated " + o.dist + " vector, d=" + std::to_string(o.d));
  const std::vector<BoundReportRow> rows = bound_report(u, o.ks);
  write_bound_report_csv(rows, dir / "bound_report.csv");
  write_pi_shape_csv(u, dir / "pi_shape.csv");
  const PiShapeResult shape = pi_shape_check(u);
  std::cout << "bound_report.csv: " << rows.size() << " rows (d=" << o.d << ", dist=" << o.dist
            << ")\n"
            << "pi_shape.csv: convex_violations=" << shape.convex_violations
            << " line_violations=" << shape.line_violations << " skip_head=" << shape.skip_head
            << '\n';
}

// ---------------------------------------------------------------------------
// train / hist (shared option set)
// ---------------------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string compressor = "topk";
  Index k = 0;
  double k_ratio = 0.01;
  double sample_ratio = 0.01;
  int refine_iters = 4;
  int workers = 4;
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 5;
  Index batch_size = 12;
  std::string data = "synth";
  std::string mnist_images;
  std::string mnist_labels;
  Index n = 10000;
  Index features = 784;
  int classes = 10;
  double radius = 1.5;
  double label_noise = 0.45;
  std::uint64_t data_seed = 555;
  std::string model = "mlp";
  Index hidden = 100;
  std::string activation = "relu";
};

void add_train_options(CLI::App* sub, TrainOpts& t) {
  add_common(sub, t.common);
  sub->add_option("--compressor", t.compressor, "Compressor (dense = no compression)")
      ->check(CLI::IsMember({"dense", "topk", "randk", "gaussiank", "dgck", "trimmedk"}))
      ->capture_default_str();
  sub->add_option("--k", t.k, "Absolute k (overrides --k-ratio when > 0)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--k-ratio", t.k_ratio, "k as a fraction of d")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  sub->add_option("--sample-ratio", t.sample_ratio, "dgck sampling fraction")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  sub->add_option("--refine-iters", t.refine_iters, "gaussiank refinement rounds")
      ->check(CLI::Range(0, 64))
      ->capture_default_str();
  sub->add_option("--workers", t.workers, "Simulated worker count P")
      ->check(CLI::Range(1, 4096))
      ->capture_default_str();
  sub->add_option("--lr", t.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--momentum", t.momentum, "Momentum factor in [0,1)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--epochs", t.epochs, "Training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--batch-size", t.batch_size, "Per-worker minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--data", t.data, "Dataset source")
      ->check(CLI::IsMember({"synth", "mnist"}))
      ->capture_default_str();
  sub->add_option("--mnist-images", t.mnist_images, "IDX image file (--data mnist)");
  sub->add_option("--mnist-labels", t.mnist_labels, "IDX label file (--data mnist)");
  sub->add_option("--n", t.n, "Sample count (synth size / mnist truncation)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--features", t.features, "Synthetic feature dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--classes", t.classes, "Synthetic class count")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  sub->add_option("--radius", t.radius, "Synthetic class-center radius")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--label-noise", t.label_noise, "Synthetic label corruption fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--data-seed", t.data_seed, "Synthetic data seed")->capture_default_str();
  sub->add_option("--model", t.model, "Model")
      ->check(CLI::IsMember({"mlp", "logreg"}))
      ->capture_default_str();
  sub->add_option("--hidden", t.hidden, "MLP hidden width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--activation", t.activation, "MLP activation")
      ->check(CLI::IsMember({"relu", "tanh"}))
      ->capture_default_str();
}

[[nodiscard]] Dataset build_dataset(const TrainOpts& t) {
  if (t.data == "mnist") {
    if (t.mnist_images.empty() || t.mnist_labels.empty()) {
      throw DomainError("--data mnist requires --mnist-images and --mnist-labels");
    }
    Dataset ds = load_idx(t.mnist_images, t.mnist_labels);
    if (t.n < ds.n()) {
      Dataset sub;
      sub.X = ds.X.topRows(t.n);
      sub.y.assign(ds.y.begin(), ds.y.begin() + t.n);
      sub.C = ds.C;
      return sub;
    }
    return ds;
  }
  return synth_dataset(t.data_seed, t.n, t.features, t.classes, t.radius, t.label_noise);
}

[[nodiscard]] ModelSpec build_model_spec(const TrainOpts& t, const Dataset& ds) {
  ModelSpec spec;
  spec.kind = t.model == "logreg" ? ModelKind::logreg : ModelKind::mlp;
  spec.in = ds.m();
  spec.hidden = t.hidden;
  spec.classes = ds.C;
  spec.act = t.activation == "tanh" ? Activation::tanh : Activation::relu;
  return spec;
}

[[nodiscard]] TrainConfig build_train_config(const TrainOpts& t) {
  TrainConfig cfg;
  cfg.P = t.workers;
  cfg.lr = t.lr;
  cfg.momentum = t.momentum;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.global_seed = t.common.seed;
  if (t.compressor == "dense") {
    cfg.dense_baseline = true;
  } else {
    cfg.compressor.kind = parse_compressor_kind(t.compressor);
    cfg.compressor.k = t.k;
    cfg.compressor.k_ratio = t.k_ratio;
    cfg.compressor.sample_ratio = t.sample_ratio;
    cfg.compressor.refine_iters = t.refine_iters;
  }
  return cfg;
}

void run_train(const TrainOpts& t) {
  const fs::path dir = prepare_out_dir(t.common.out);
  const Dataset ds = build_dataset(t);
  const ModelSpec model = build_model_spec(t, ds);
  const TrainConfig cfg = build_train_config(t);
  vlog(t.common, "training " + t.model + " (" + std::to_string(param_count(model)) +
                     " parameters) on " + std::to_string(ds.n()) + " samples, compressor=" +
                     t.compressor);
  const TrainLog log = train(cfg, model, ds);
  write_train_iters_csv(log, dir / "train_iters.csv");
  write_train_epochs_csv(log, dir / "train_epochs.csv");
  if (log.diverged) {
    std::cout << "train: DIVERGED (non-finite loss) at iteration " << log.diverged_iter
              << "; partial logs written\n";
    return;
  }
  std::cout << "train: " << log.iters.size() << " iterations, " << log.epochs.size()
            << " epochs";
  if (!log.epochs.empty()) {
    std::cout << ", final eval_loss=" << csv_cell(log.epochs.back().eval_loss)
              << " eval_acc=" << csv_cell(log.epochs.back().eval_acc);
  }
  if (!log.iters.empty()) {
    std::cout << ", comm_count_cum=" << log.iters.back().comm_count_cum;
  }
  std::cout << '\n';
}

struct HistOpts {
  TrainOpts train;
  int bins = 100;
  long long every = 10;
};

void run_hist(const HistOpts& h) {
  const fs::path dir = prepare_out_dir(h.train.common.out);
  const Dataset ds = build_dataset(h.train);
  const ModelSpec model = build_model_spec(h.train, ds);
  const TrainConfig cfg = build_train_config(h.train);
  long long checkpoints = 0;
  const UpdateProbe probe = [&](long long iter, int worker, const VecX<double>& u) {
    if (worker != 0 || iter % h.every != 0) return;
    write_histogram_csv(histogram(u, h.bins), dir / ("hist_t" + std::to_string(iter) + ".csv"));
    ++checkpoints;
  };
  const TrainLog log = train(cfg, model, ds, {}, probe);
  if (log.diverged) {
    std::cout << "hist: run DIVERGED at iteration " << log.diverged_iter << "; wrote "
              << checkpoints << " checkpoint histograms\n";
    return;
  }
  std::cout << "hist: wrote " << checkpoints << " checkpoint histograms (bins=" << h.bins
            << ", every=" << h.every << " iterations, worker 0)\n";
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchCliOpts {
  CommonOpts common;
  std::vector<std::string> dims{"1e5"};
  double k_ratio = 0.001;
  std::vector<std::string> kinds{"topk", "topk_sort", "gaussiank", "dgck"};
  int repeats = 5;
  bool fp32 = false;
  double sample_ratio = 0.01;
  int refine_iters = 4;
};

// Accepts plain integers and scientific notation ("250000", "1e6", "2.5e5").
[[nodiscard]] Index parse_dim(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) {
    throw FormatError("bench: cannot parse dimension '" + s + "'");
  }
  if (!(v >= 1.0 && v <= 1e15)) {
    throw DomainError("bench: dimension '" + s + "' out of range [1, 1e15]");
  }
  const double r = static_cast<double>(std::llround(v));
  if (std::abs(v - r) > 1e-6 * v) {
    throw FormatError("bench: dimension '" + s + "' is not an integer");
  }
  return static_cast<Index>(std::llround(v));
}

void run_bench_cli(const BenchCliOpts& o) {
  const fs::path dir = prepare_out_dir(o.common.out);
  BenchOptions opt;
  opt.dims.reserve(o.dims.size());
  for (const std::string& s : o.dims) opt.dims.push_back(parse_dim(s));
  opt.k_ratio = o.k_ratio;
  opt.kinds = o.kinds;
  opt.repeats = o.repeats;
  opt.seed = o.common.seed;
  opt.fp32 = o.fp32;
  opt.sample_ratio = o.sample_ratio;
  opt.refine_iters = o.refine_iters;
  vlog(o.common, "benchmarking " + std::to_string(opt.dims.size()) + " dims x " +
                     std::to_string(opt.kinds.size()) + " kinds, repeats=" +
                     std::to_string(opt.repeats));
  const std::vector<BenchRow> rows = run_bench(opt);
  write_bench_csv(rows, dir / "bench.csv");
  std::cout << "bench.csv: " << rows.size()
            << " rows (wall_ms_median is machine time; full_passes/selected_count/recall are "
               "deterministic)\n";
}

// ---------------------------------------------------------------------------
// randk-check
// ---------------------------------------------------------------------------

struct RandkCheckOpts {
  CommonOpts common;
  Index d = 10000;
  Index k = 100;
  int trials = 1000;
  std::string dist = "gaussian";
};

void run_randk_check(const RandkCheckOpts& o) {
  const fs::path dir = prepare_out_dir(o.common.out);
  const VecX<double> u = make_test_vector(parse_test_dist(o.dist), o.d, o.common.seed);
  const RandkCheckResult res = randk_expectation_check(u, o.k, o.trials, o.common.seed);
  write_randk_check_csv(o.d, o.k, o.trials, res, dir / "randk_check.csv");
  const double rel =
      res.target > 0.0 ? std::abs(res.mean_ratio - res.target) / res.target : res.mean_ratio;
  std::cout << "randk-check: mean_ratio=" << csv_cell(res.mean_ratio)
            << " target=" << csv_cell(res.target) << " rel_err=" << csv_cell(rel) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparsecomm — gradient sparsification toolkit"};
  app.set_version_flag("--version", std::string(SPARSECOMM_VERSION));
  app.require_subcommand(1);
  // One config option for the whole tool. Keys live in a TOML section named
  // after the subcommand ([train], [bound], ...); flags given on the command
  // line take precedence over file values.
  app.set_config("--config", "",
                 "TOML config; keys under a [subcommand] section mirror its long flags");

  BoundOpts bound_opts;
  CLI::App* bound = app.add_subcommand(
      "bound", "Discarded-energy ratio of exact top-k vs. the contraction bounds");
  add_common(bound, bound_opts.common);
  bound->add_option("--d", bound_opts.d, "Vector dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bound->add_option("--dist", bound_opts.dist, "Test vector distribution")
      ->check(CLI::IsMember({"gaussian", "laplace", "uniform", "constant"}))
      ->capture_default_str();
  bound->add_option("--ks", bound_opts.ks, "Comma-separated k values")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bound->callback([&] { run_bound(bound_opts); });

  HistOpts hist_opts;
  hist_opts.train.compressor = "gaussiank";
  hist_opts.train.epochs = 1;
  CLI::App* hist = app.add_subcommand(
      "hist", "Histogram/CDF checkpoints of worker 0's update vector while training");
  add_train_options(hist, hist_opts.train);
  hist->add_option("--bins", hist_opts.bins, "Histogram bins")
      ->check(CLI::Range(1, 100000))
      ->capture_default_str();
  hist->add_option("--every", hist_opts.every, "Checkpoint every N iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  hist->callback([&] { run_hist(hist_opts); });

  TrainOpts train_opts;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Error-feedback data-parallel SGD with compressed updates");
  add_train_options(train_cmd, train_opts);
  train_cmd->callback([&] { run_train(train_opts); });

  BenchCliOpts bench_opts;
  CLI::App* bench = app.add_subcommand("bench", "Compressor cost comparison (time + passes)");
  add_common(bench, bench_opts.common);
  bench->add_option("--dims", bench_opts.dims, "Comma-separated dimensions (1e6 notation ok)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--k-ratio", bench_opts.k_ratio, "k as a fraction of d")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  bench->add_option("--kinds", bench_opts.kinds,
                    "Comma-separated compressors (topk_sort = full-sort top-k baseline)")
      ->delimiter(',')
      ->check(CLI::IsMember({"topk", "topk_sort", "randk", "gaussiank", "dgck", "trimmedk"}))
      ->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "Timed repeats per case (median reported)")
      ->check(CLI::Range(3, 1000))
      ->capture_default_str();
  bench->add_flag("--fp32", bench_opts.fp32, "Benchmark on float32 data");
  bench->add_option("--sample-ratio", bench_opts.sample_ratio, "dgck sampling fraction")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  bench->add_option("--refine-iters", bench_opts.refine_iters, "gaussiank refinement rounds")
      ->check(CLI::Range(0, 64))
      ->capture_default_str();
  bench->callback([&] { run_bench_cli(bench_opts); });

  RandkCheckOpts randk_opts;
  CLI::App* randk = app.add_subcommand(
      "randk-check", "Monte Carlo check of the uniform-selection discarded-energy expectation");
  add_common(randk, randk_opts.common);
  randk->add_option("--d", randk_opts.d, "Vector dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  randk->add_option("--k", randk_opts.k, "Selected coordinates per trial")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  randk->add_option("--trials", randk_opts.trials, "Monte Carlo trials")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  randk->add_option("--dist", randk_opts.dist, "Test vector distribution")
      ->check(CLI::IsMember({"gaussian", "laplace", "uniform", "constant"}))
      ->capture_default_str();
  randk->callback([&] { run_randk_check(randk_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    app.exit(e);  // prints the one-line diagnostic (and usage where apt)
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
