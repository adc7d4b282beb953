// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "sparsecomm/analysis.hpp"
#include "sparsecomm/compressors.hpp"
#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/ef_engine.hpp"
#include "sparsecomm/models_data.hpp"

using namespace sparsecomm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "sparsecomm_ef_tests";
  fs::create_directories(dir);
  return dir;
}

TrainConfig small_logreg_config() {
  TrainConfig cfg;
  cfg.P = 2;
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.global_seed = 77;
  cfg.compressor.kind = CompressorKind::topk;
  cfg.compressor.k = 5;
  return cfg;
}

ModelSpec small_logreg() {
  ModelSpec s;
  s.kind = ModelKind::logreg;
  s.in = 6;
  s.classes = 3;
  return s;
}

}  // namespace

TEST_SUITE("ef_engine") {
  TEST_CASE("ef_local_step compresses gradient plus residual and keeps the rest") {
    WorkerState w(0, 2, 9);
    VecX<double> g(2);
    g << 3, -1;
    CompressorSpec spec;
    spec.kind = CompressorKind::topk;
    spec.k = 1;
    const auto s = ef_local_step(w, g, spec);
    REQUIRE(s.size() == 1);
    CHECK(s.indices[0] == 0);
    CHECK(s.values[0] == 3.0);
    CHECK(w.residual[0] == 0.0);   // sent -> cleared
    CHECK(w.residual[1] == -1.0);  // unsent -> carried

    // Next step folds the carried residual in before compressing.
    VecX<double> g2(2);
    g2 << 0.5, -1.5;
    const auto s2 = ef_local_step(w, g2, spec);
    CHECK(s2.indices[0] == 1);
    CHECK(s2.values[0] == -2.5);  // -1 carried + -1.5 fresh
    CHECK(w.residual[0] == 0.5);
    CHECK(w.residual[1] == 0.0);
  }

  TEST_CASE("ef_local_step rejects mismatched gradient length") {
    WorkerState w(0, 4, 1);
    VecX<double> g(3);
    g.setOnes();
    CompressorSpec spec;
    spec.kind = CompressorKind::topk;
    spec.k = 1;
    CHECK_THROWS_AS((void)ef_local_step(w, g, spec), StructuralError);
  }

  TEST_CASE("selection plus new residual reconstructs the input exactly") {
    // The identity densify(s) + residual == g + old_residual must hold
    // bitwise per coordinate: selected values are moved, never recomputed.
    const VecX<double> g = make_test_vector(TestDist::gaussian, 4000, 3);
    for (const CompressorKind kind :
         {CompressorKind::topk, CompressorKind::randk, CompressorKind::gaussiank,
          CompressorKind::dgck, CompressorKind::trimmedk}) {
      CompressorSpec spec;
      spec.kind = kind;
      spec.k = 40;
      spec.seed = 5;
      WorkerState w(0, 4000, 5);
      // seed the residual with something nonzero first
      VecX<double> warm = make_test_vector(TestDist::laplace, 4000, 8);
      (void)ef_local_step(w, warm, spec);
      const VecX<double> u = g + w.residual;  // what the step will see
      const auto s = ef_local_step(w, g, spec);
      const VecX<double> rebuilt = densify(s) + w.residual;
      CAPTURE(to_string(kind));
      for (Index i = 0; i < u.size(); ++i) {
        REQUIRE(rebuilt[i] == u[i]);  // bitwise
      }
      for (std::size_t j = 0; j < s.indices.size(); ++j) {
        REQUIRE(w.residual[s.indices[j]] == 0.0);
      }
    }
  }

  TEST_CASE("worker residuals start at zero and streams differ per worker") {
    WorkerState w0(0, 8, 42);
    WorkerState w1(1, 8, 42);
    CHECK(w0.residual.isZero(0.0));
    CHECK(w1.residual.isZero(0.0));
    CHECK(w0.rng.next_u64() != w1.rng.next_u64());
  }

  TEST_CASE("aggregate averages sparse selections into a dense vector") {
    SparseSelection<double> a;
    a.d = 3;
    a.indices = {0, 2};
    a.values = {6.0, 3.0};
    SparseSelection<double> b;
    b.d = 3;
    b.indices = {0};
    b.values = {-2.0};
    const VecX<double> avg = aggregate({a, b}, 2);
    REQUIRE(avg.size() == 3);
    CHECK(avg[0] == 2.0);
    CHECK(avg[1] == 0.0);
    CHECK(avg[2] == 1.5);
  }

  TEST_CASE("aggregate sums in ascending worker order") {
    // Catastrophic-cancellation probe: (1e16 + 1) + (-1e16) == 0 in
    // ascending order, while (1e16 + -1e16) + 1 would give 1. Pins the
    // documented deterministic order.
    auto sel = [](double v) {
      SparseSelection<double> s;
      s.d = 1;
      s.indices = {0};
      s.values = {v};
      return s;
    };
    const VecX<double> avg = aggregate({sel(1e16), sel(1.0), sel(-1e16)}, 3);
    CHECK(avg[0] == 0.0);
  }

  TEST_CASE("aggregate validates worker count and dimensions") {
    SparseSelection<double> a;
    a.d = 3;
    a.indices = {0};
    a.values = {1.0};
    SparseSelection<double> b;
    b.d = 4;
    b.indices = {0};
    b.values = {1.0};
    CHECK_THROWS_AS((void)aggregate({a, b}, 2), StructuralError);
    CHECK_THROWS_AS((void)aggregate({a}, 2), StructuralError);
    CHECK_THROWS_AS((void)aggregate({}, 0), StructuralError);
  }

  TEST_CASE("sgd_update applies heavy-ball momentum") {
    VecX<double> x = VecX<double>::Zero(1);
    VecX<double> v = VecX<double>::Zero(1);
    VecX<double> agg(1);
    agg << 1.0;
    sgd_update(x, v, agg, 1.0, 0.9);
    CHECK(x[0] == -1.0);
    CHECK(v[0] == 1.0);
    sgd_update(x, v, agg, 1.0, 0.9);
    CHECK(v[0] == 1.9);
    CHECK(x[0] == -2.9);
  }

  TEST_CASE("train produces consistent logs on a small problem") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    const TrainConfig cfg = small_logreg_config();
    const ModelSpec model = small_logreg();
    const TrainLog log = train(cfg, model, ds);

    CHECK(log.P == 2);
    CHECK_FALSE(log.diverged);
    // 64 samples / (2 workers * 4 per batch) = 8 iterations per epoch.
    REQUIRE(log.iters.size() == 16);
    REQUIRE(log.epochs.size() == 2);
    long long prev_comm = 0;
    for (std::size_t t = 0; t < log.iters.size(); ++t) {
      const auto& r = log.iters[t];
      REQUIRE(r.iter == static_cast<long long>(t));
      REQUIRE(std::isfinite(r.loss));
      REQUIRE(r.agg_l2sq >= 0.0);
      REQUIRE(r.comm_count_cum >= prev_comm);  // cumulative, nondecreasing
      prev_comm = r.comm_count_cum;
      REQUIRE(r.sel_counts.size() == 2);
      for (const Index c : r.sel_counts) {
        REQUIRE(c == 5);  // top-k sends exactly k per worker
      }
    }
    CHECK(log.iters.back().comm_count_cum == 16 * 2 * 5);
    // Training should beat the uniform-guess loss on this separable set.
    CHECK(log.epochs.back().eval_loss < std::log(3.0));
    CHECK(log.epochs.back().eval_acc > 0.5);
    CHECK(log.epochs[0].epoch == 0);
    CHECK(log.epochs[1].epoch == 1);
  }

  TEST_CASE("train is deterministic under its seed") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    TrainConfig cfg = small_logreg_config();
    cfg.compressor.kind = CompressorKind::randk;  // exercise the RNG path
    const ModelSpec model = small_logreg();

    std::vector<VecX<double>> traj_a;
    std::vector<VecX<double>> traj_b;
    const auto probe_into = [](std::vector<VecX<double>>& dst) {
      return [&dst](long long, const VecX<double>& x) { dst.push_back(x); };
    };
    (void)train(cfg, model, ds, probe_into(traj_a));
    (void)train(cfg, model, ds, probe_into(traj_b));
    REQUIRE(traj_a.size() == traj_b.size());
    for (std::size_t t = 0; t < traj_a.size(); ++t) {
      REQUIRE(traj_a[t] == traj_b[t]);  // bitwise
    }

    cfg.global_seed += 1;
    std::vector<VecX<double>> traj_c;
    (void)train(cfg, model, ds, probe_into(traj_c));
    CHECK(traj_a.back() != traj_c.back());
  }

  TEST_CASE("dense mode follows the plain data-parallel reference bitwise") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    const ModelSpec model = small_logreg();
    for (const int P : {1, 2, 4}) {
      TrainConfig cfg = small_logreg_config();
      cfg.P = P;
      cfg.batch_size = 2;
      cfg.dense_baseline = true;

      std::vector<VecX<double>> traj_ef;
      std::vector<VecX<double>> traj_ref;
      (void)train(cfg, model, ds,
                  [&](long long, const VecX<double>& x) { traj_ef.push_back(x); });
      (void)train_dense_reference(
          cfg, model, ds,
          [&](long long, const VecX<double>& x) { traj_ref.push_back(x); });
      REQUIRE(traj_ef.size() == traj_ref.size());
      CAPTURE(P);
      for (std::size_t t = 0; t < traj_ef.size(); ++t) {
        REQUIRE(traj_ef[t].size() == traj_ref[t].size());
        for (Index i = 0; i < traj_ef[t].size(); ++i) {
          REQUIRE(traj_ef[t][i] == traj_ref[t][i]);  // bitwise
        }
      }
    }
  }

  TEST_CASE("update probe sees gradient plus carried residual") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    TrainConfig cfg = small_logreg_config();
    cfg.epochs = 1;
    const ModelSpec model = small_logreg();
    long long calls = 0;
    VecX<double> first_u;
    (void)train(cfg, model, ds, {}, [&](long long t, int p, const VecX<double>& u) {
      if (calls == 0) {
        CHECK(t == 0);
        CHECK(p == 0);
        first_u = u;
      }
      ++calls;
    });
    CHECK(calls == 8 * 2);  // iters * workers
    REQUIRE(first_u.size() == param_count(model));
    // At t=0 the residual is zero, so u is exactly the minibatch gradient.
    const auto perm = epoch_permutation(64, cfg.global_seed, 0);
    std::vector<Index> batch(perm.begin(), perm.begin() + 4);
    const VecX<double> x0 = model_init(model, cfg.global_seed);
    const auto [loss, g] = model_loss_grad(model, x0, ds, batch);
    CHECK(first_u == g);
  }

  TEST_CASE("train flags divergence and returns the partial log") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    TrainConfig cfg = small_logreg_config();
    // Logreg cannot overflow (softmax gradients are bounded), so use an MLP:
    // its logits scale with the product of layer weights, and a huge step
    // compounds to non-finite loss within a few iterations.
    cfg.lr = 1e10;
    cfg.epochs = 3;
    ModelSpec model;
    model.kind = ModelKind::mlp;
    model.in = 6;
    model.hidden = 8;
    model.classes = 3;
    const TrainLog log = train(cfg, model, ds);
    CHECK(log.diverged);
    CHECK(log.diverged_iter >= 0);
    CHECK(log.iters.size() < 3 * 8);
    CHECK(log.iters.size() == static_cast<std::size_t>(log.diverged_iter));
  }

  TEST_CASE("train validates its configuration") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    const ModelSpec model = small_logreg();
    TrainConfig cfg = small_logreg_config();
    cfg.P = 0;
    CHECK_THROWS_AS((void)train(cfg, model, ds), DomainError);
    cfg = small_logreg_config();
    cfg.lr = 0.0;
    CHECK_THROWS_AS((void)train(cfg, model, ds), DomainError);
    cfg = small_logreg_config();
    cfg.momentum = 1.0;
    CHECK_THROWS_AS((void)train(cfg, model, ds), DomainError);
    cfg = small_logreg_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS((void)train(cfg, model, ds), DomainError);
    cfg = small_logreg_config();
    cfg.batch_size = 64;  // P * B = 128 > n
    CHECK_THROWS_AS((void)train(cfg, model, ds), DomainError);
  }

  TEST_CASE("training CSV writers emit the documented headers and rows") {
    const Dataset ds = synth_dataset(2, 64, 6, 3);
    const TrainConfig cfg = small_logreg_config();
    const TrainLog log = train(cfg, small_logreg(), ds);

    const fs::path iters_p = temp_dir() / "train_iters.csv";
    const fs::path epochs_p = temp_dir() / "train_epochs.csv";
    write_train_iters_csv(log, iters_p);
    write_train_epochs_csv(log, epochs_p);

    std::ifstream fi(iters_p);
    std::string line;
    REQUIRE(std::getline(fi, line));
    CHECK(line == "iter,loss,agg_l2sq,comm_count_cum,sel_count_w0,sel_count_w1");
    std::size_t rows = 0;
    while (std::getline(fi, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(rows == log.iters.size());

    std::ifstream fe(epochs_p);
    REQUIRE(std::getline(fe, line));
    CHECK(line == "epoch,eval_loss,eval_acc");
    rows = 0;
    while (std::getline(fe, line)) ++rows;
    CHECK(rows == log.epochs.size());
  }
}
