// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Error-feedback data-parallel SGD, simulated synchronously in one process:
//
//   per worker p:  u = g_p + eps_p;  s_p = Comp_k(u);  eps_p <- u - dense(s_p)
//   server:        agg = (1/P) * sum_p dense(s_p)   (fixed ascending-id order)
//                  v <- momentum * v + agg;  x <- x - lr * v
//
// The residual update is computed exactly (copy u, zero the selected
// coordinates), so dense(s_p) + eps_new == g_p + eps_old holds coordinate-
// wise. Momentum is applied globally to the aggregated update (server-side):
// that choice keeps compression with k = d bitwise identical to the plain
// dense momentum loop, which anchors the engine's tests. "Communication" is
// the exchange of SparseSelection values; transport is out of scope.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sparsecomm/compressors.hpp"
#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/csv.hpp"
#include "sparsecomm/models_data.hpp"
#include "sparsecomm/rng.hpp"

namespace sparsecomm {

// Per-worker state: residual (eps, zero-initialized), a reserved per-worker
// momentum buffer (unused by the global-momentum update; kept as the
// extension point for a per-worker momentum variant, which carries no
// acceptance weight), and the worker's private RNG stream.
struct WorkerState {
  int worker_id = 0;
  VecX<double> residual;
  VecX<double> momentum_buf;
  Rng rng{0};

  WorkerState(int id, Index d, std::uint64_t global_seed)
      : worker_id(id),
        residual(VecX<double>::Zero(d)),
        momentum_buf(VecX<double>::Zero(d)),
        rng(Rng::substream(global_seed, std::uint64_t(id) + 1, 0)) {}
};

// One local error-feedback step: u = g + eps; s = Comp(u); eps <- u with the
// selected coordinates zeroed (exactly u - dense(s)). Returns s.
inline SparseSelection<double> ef_local_step(WorkerState& w, const VecX<double>& g,
                                             const CompressorSpec& spec,
                                             PassCounter* pc = nullptr) {
  if (g.size() != w.residual.size()) {
    throw StructuralError("ef_local_step: gradient length " + std::to_string(g.size()) +
                          " does not match residual length " +
                          std::to_string(w.residual.size()));
  }
  const VecX<double> u = g + w.residual;
  SparseSelection<double> s = compress_with_rng(spec, u, w.rng, pc);
  w.residual = u;
  for (const Index i : s.indices) {
    w.residual[i] = 0.0;
  }
  return s;
}

// Averages the densified selections in ascending worker-id order into a
// dense vector: (1/P) * sum_p dense(s_p). The summation order is fixed, so
// the result is bitwise deterministic regardless of worker scheduling.
inline VecX<double> aggregate(const std::vector<SparseSelection<double>>& selections, int P) {
  if (P < 1 || selections.size() != std::size_t(P)) {
    throw StructuralError("aggregate: expected " + std::to_string(P) + " selections, got " +
                          std::to_string(selections.size()));
  }
  const Index d = selections.front().d;
  VecX<double> acc = VecX<double>::Zero(d);
  for (const auto& s : selections) {
    if (s.d != d) {
      throw StructuralError("aggregate: selections disagree on d (" + std::to_string(s.d) +
                            " vs " + std::to_string(d) + ")");
    }
    for (std::size_t j = 0; j < s.indices.size(); ++j) {
      acc[s.indices[j]] += s.values[j];
    }
  }
  acc /= double(P);
  return acc;
}

// Heavy-ball update: v <- momentum * v + agg; x <- x - lr * v. With
// momentum = 0 this is plain SGD on the averaged gradient.
inline void sgd_update(VecX<double>& x, VecX<double>& v, const VecX<double>& agg, double lr,
                       double momentum) {
  if (x.size() != v.size() || x.size() != agg.size()) {
    throw StructuralError("sgd_update: dimension mismatch");
  }
  v = momentum * v + agg;
  x -= lr * v;
}

// ---------------------------------------------------------------------------
// Training orchestration.
// ---------------------------------------------------------------------------

struct TrainConfig {
  int P = 4;                 // worker count
  double lr = 0.01;          // constant learning rate
  double momentum = 0.9;
  int epochs = 5;
  Index batch_size = 12;     // per worker
  CompressorSpec compressor; // ignored when dense_baseline is set
  bool dense_baseline = false;  // run with identity compression (top_k, k = d)
  std::uint64_t global_seed = 123;
};

struct IterRecord {
  long long iter = 0;               // global iteration index, 0-based
  double loss = 0.0;                // mean over the P workers' batch losses
  double agg_l2sq = 0.0;            // ||aggregate||^2
  long long comm_count_cum = 0;     // cumulative communicated coordinates
  std::vector<Index> sel_counts;    // per-worker selected counts, id-ascending
};

struct EpochRecord {
  int epoch = 0;  // 0-based
  double eval_loss = 0.0;
  double eval_acc = 0.0;
};

struct TrainLog {
  int P = 0;
  std::vector<IterRecord> iters;
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  long long diverged_iter = -1;
};

// Called after every parameter update with the 0-based global iteration
// index and the updated parameters (trajectory probes for equivalence
// tests). Empty by default.
using TrajectoryProbe = std::function<void(long long, const VecX<double>&)>;

// Called per worker per iteration with the worker's pre-compression update
// vector u = g + residual (what the compressor actually sees; histogram
// checkpoints tap this). Empty by default.
using UpdateProbe = std::function<void(long long, int, const VecX<double>&)>;

// Synchronous data-parallel training loop. Each epoch reshuffles a global
// permutation (substream (seed, 0, epoch)); at iteration b of an epoch,
// worker p trains on slice (b*P + p)*B ... +B. Iterations per epoch:
// floor(n / (P*B)); the tail remainder of the permutation is unused that
// epoch. A non-finite loss terminates the run with diverged = true and the
// offending iteration recorded; per-epoch evaluation runs on the full set.
inline TrainLog train(const TrainConfig& cfg, const ModelSpec& model, const Dataset& ds,
                      const TrajectoryProbe& probe = {}, const UpdateProbe& u_probe = {}) {
  if (cfg.P < 1) throw DomainError("train: P must be >= 1");
  if (!(cfg.lr > 0.0)) throw DomainError("train: lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw DomainError("train: momentum must lie in [0,1)");
  }
  if (cfg.epochs < 1) throw DomainError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw DomainError("train: batch_size must be >= 1");

  const Index d = param_count(model);
  const Index n = ds.n();
  const Index iters_per_epoch = n / (Index(cfg.P) * cfg.batch_size);
  if (iters_per_epoch < 1) {
    throw DomainError("train: dataset has " + std::to_string(n) + " samples, too few for P=" +
                      std::to_string(cfg.P) + " workers with batch_size=" +
                      std::to_string(cfg.batch_size));
  }

  CompressorSpec spec = cfg.compressor;
  if (cfg.dense_baseline) {
    spec = CompressorSpec{CompressorKind::topk, d, 0.0, 0.01, 4, 0};
  }

  VecX<double> x = model_init(model, cfg.global_seed);
  VecX<double> v = VecX<double>::Zero(d);
  std::vector<WorkerState> workers;
  workers.reserve(std::size_t(cfg.P));
  for (int p = 0; p < cfg.P; ++p) {
    workers.emplace_back(p, d, cfg.global_seed);
  }

  TrainLog log;
  log.P = cfg.P;
  long long comm_cum = 0;
  long long t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Index> perm = epoch_permutation(n, cfg.global_seed, std::uint64_t(epoch));
    for (Index b = 0; b < iters_per_epoch; ++b) {
      std::vector<SparseSelection<double>> sels;
      sels.reserve(std::size_t(cfg.P));
      NeumaierSum loss_sum;
      try {
        for (int p = 0; p < cfg.P; ++p) {
          std::vector<Index> batch(std::size_t(cfg.batch_size));
          const Index base = (b * cfg.P + p) * cfg.batch_size;
          for (Index i = 0; i < cfg.batch_size; ++i) {
            batch[std::size_t(i)] = perm[std::size_t(base + i)];
          }
          auto [loss_p, g] = model_loss_grad(model, x, ds, batch);
          loss_sum.add(loss_p);
          if (u_probe) u_probe(t, p, VecX<double>(g + workers[std::size_t(p)].residual));
          sels.push_back(ef_local_step(workers[std::size_t(p)], g, spec));
        }
      } catch (const NumericalError&) {
        log.diverged = true;
        log.diverged_iter = t;
        return log;
      }
      const VecX<double> agg = aggregate(sels, cfg.P);
      sgd_update(x, v, agg, cfg.lr, cfg.momentum);

      IterRecord rec;
      rec.iter = t;
      rec.loss = loss_sum.value() / double(cfg.P);
      rec.agg_l2sq = squared_norm_compensated(agg);
      for (const auto& s : sels) {
        comm_cum += s.size();
        rec.sel_counts.push_back(s.size());
      }
      rec.comm_count_cum = comm_cum;
      log.iters.push_back(std::move(rec));
      if (probe) probe(t, x);
      ++t;
    }
    EpochRecord er;
    er.epoch = epoch;
    try {
      std::tie(er.eval_loss, er.eval_acc) = model_eval(model, x, ds);
    } catch (const NumericalError&) {
      log.diverged = true;
      log.diverged_iter = t - 1;
      return log;
    }
    log.epochs.push_back(er);
  }
  return log;
}

// Plain uncompressed momentum-SGD on the same shard plan: workers' batch
// gradients are averaged densely (ascending id order), no residuals, same
// update rule. The compression-disabled reference for equivalence tests.
inline TrainLog train_dense_reference(const TrainConfig& cfg, const ModelSpec& model,
                                      const Dataset& ds, const TrajectoryProbe& probe = {}) {
  if (cfg.P < 1) throw DomainError("train: P must be >= 1");
  const Index d = param_count(model);
  const Index n = ds.n();
  const Index iters_per_epoch = n / (Index(cfg.P) * cfg.batch_size);
  if (iters_per_epoch < 1) {
    throw DomainError("train: dataset too small for the worker/batch plan");
  }

  VecX<double> x = model_init(model, cfg.global_seed);
  VecX<double> v = VecX<double>::Zero(d);

  TrainLog log;
  log.P = cfg.P;
  long long comm_cum = 0;
  long long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Index> perm = epoch_permutation(n, cfg.global_seed, std::uint64_t(epoch));
    for (Index b = 0; b < iters_per_epoch; ++b) {
      VecX<double> acc = VecX<double>::Zero(d);
      NeumaierSum loss_sum;
      try {
        for (int p = 0; p < cfg.P; ++p) {
          std::vector<Index> batch(std::size_t(cfg.batch_size));
          const Index base = (b * cfg.P + p) * cfg.batch_size;
          for (Index i = 0; i < cfg.batch_size; ++i) {
            batch[std::size_t(i)] = perm[std::size_t(base + i)];
          }
          auto [loss_p, g] = model_loss_grad(model, x, ds, batch);
          loss_sum.add(loss_p);
          acc += g;
        }
      } catch (const NumericalError&) {
        log.diverged = true;
        log.diverged_iter = t;
        return log;
      }
      acc /= double(cfg.P);
      sgd_update(x, v, acc, cfg.lr, cfg.momentum);

      IterRecord rec;
      rec.iter = t;
      rec.loss = loss_sum.value() / double(cfg.P);
      rec.agg_l2sq = squared_norm_compensated(acc);
      comm_cum += static_cast<long long>(d) * cfg.P;
      rec.comm_count_cum = comm_cum;
      rec.sel_counts.assign(std::size_t(cfg.P), d);
      log.iters.push_back(std::move(rec));
      if (probe) probe(t, x);
      ++t;
    }
    EpochRecord er;
    er.epoch = epoch;
    try {
      std::tie(er.eval_loss, er.eval_acc) = model_eval(model, x, ds);
    } catch (const NumericalError&) {
      log.diverged = true;
      log.diverged_iter = t - 1;
      return log;
    }
    log.epochs.push_back(er);
  }
  return log;
}

// ---------------------------------------------------------------------------
// CSV emission.
// ---------------------------------------------------------------------------

// Iteration log: iter,loss,agg_l2sq,comm_count_cum,sel_count_w0..w{P-1}.
inline void write_train_iters_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::vector<std::string> header = {"iter", "loss", "agg_l2sq", "comm_count_cum"};
  for (int p = 0; p < log.P; ++p) {
    header.push_back("sel_count_w" + std::to_string(p));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << '\n';
  for (const auto& r : log.iters) {
    out << csv_cell(r.iter) << ',' << csv_cell(r.loss) << ',' << csv_cell(r.agg_l2sq) << ','
        << csv_cell(r.comm_count_cum);
    for (const Index c : r.sel_counts) {
      out << ',' << csv_cell(c);
    }
    out << '\n';
  }
}

// Epoch log: epoch,eval_loss,eval_acc.
inline void write_train_epochs_csv(const TrainLog& log, const std::filesystem::path& path) {
  CsvWriter w(path, {"epoch", "eval_loss", "eval_acc"});
  for (const auto& e : log.epochs) {
    w.row(e.epoch, e.eval_loss, e.eval_acc);
  }
}

}  // namespace sparsecomm
