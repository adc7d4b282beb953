// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// The five sparsification operators behind one compressor contract:
//
//   top_k      — exact k largest-magnitude coordinates
//   rand_k     — k uniform coordinates without replacement
//   gaussian_k — threshold from a Gaussian quantile of the measured (mu,
//                sigma), refined multiplicatively; selected count is
//                approximate by design (may under- or over-shoot k)
//   dgc_k      — threshold estimated from a small uniform sample, then a
//                full scan; a second exact top-k caps gross over-collection
//   trimmed_k  — deterministic threshold search between max and mean
//                magnitude; tends to over-select
//
// Every operator is a pure function of (input vector, parameters, seed):
// repeated calls agree bitwise. Selected values are always the original
// coordinates. Returned indices are strictly ascending.
//
// Cost accounting: each operator fills a PassCounter with the number of
// O(d) sweeps it performed and the exact number of element reads. The pass
// metric is hardware-independent, unlike wall time, so tests can assert it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/rng.hpp"

namespace sparsecomm {

enum class CompressorKind { topk, randk, gaussiank, dgck, trimmedk };

[[nodiscard]] inline std::string to_string(CompressorKind k) {
  switch (k) {
    case CompressorKind::topk: return "topk";
    case CompressorKind::randk: return "randk";
    case CompressorKind::gaussiank: return "gaussiank";
    case CompressorKind::dgck: return "dgck";
    case CompressorKind::trimmedk: return "trimmedk";
  }
  return "?";
}

[[nodiscard]] inline CompressorKind parse_compressor_kind(const std::string& name) {
  if (name == "topk") return CompressorKind::topk;
  if (name == "randk") return CompressorKind::randk;
  if (name == "gaussiank") return CompressorKind::gaussiank;
  if (name == "dgck") return CompressorKind::dgck;
  if (name == "trimmedk") return CompressorKind::trimmedk;
  throw FormatError("unknown compressor kind '" + name +
                    "' (expected topk|randk|gaussiank|dgck|trimmedk)");
}

// Tagged choice of operator with its parameters. Exactly one of k / k_ratio
// is used: k > 0 wins, otherwise k = max(1, round(k_ratio * d)).
struct CompressorSpec {
  CompressorKind kind = CompressorKind::topk;
  Index k = 0;             // absolute k (takes precedence when > 0)
  double k_ratio = 0.0;    // k as a fraction of d, in (0, 1]
  double sample_ratio = 0.01;  // dgck only
  int refine_iters = 4;        // gaussiank only
  std::uint64_t seed = 0;      // randk / dgck
};

// Instrumented cost of the last compression call. full_passes counts O(d)
// sweeps; elements_touched counts exact element reads (an extension of the
// pass metric fine-grained enough to assert the sub-linear sampling stages).
struct PassCounter {
  int full_passes = 0;
  long long elements_touched = 0;
};

namespace detail {

inline void check_k(Index k, Index d, const char* op) {
  if (d < 1) {
    throw DimensionError(std::string(op) + ": empty vector (d must be >= 1)");
  }
  if (k < 1 || k > d) {
    throw DomainError(std::string(op) + ": k=" + std::to_string(k) +
                      " out of range [1," + std::to_string(d) + "]");
  }
}

// Total order on coordinates: larger |value| first, ties broken by smaller
// index. Gives exact top-k selection a deterministic, documented result.
template <typename Derived>
struct MagnitudeGreater {
  const Eigen::MatrixBase<Derived>& u;
  bool operator()(Index i, Index j) const {
    const double ai = std::abs(static_cast<double>(u.coeff(i)));
    const double aj = std::abs(static_cast<double>(u.coeff(j)));
    if (ai != aj) return ai > aj;
    return i < j;
  }
};

// Gathers (sorted ascending) indices into a SparseSelection.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> gather(
    const Eigen::MatrixBase<Derived>& u, std::vector<Index>&& indices) {
  SparseSelection<typename Derived::Scalar> sel;
  sel.d = u.size();
  sel.indices = std::move(indices);
  sel.values.reserve(sel.indices.size());
  for (const Index i : sel.indices) {
    sel.values.push_back(u.coeff(i));
  }
  return sel;
}

// Draws `count` distinct indices uniformly from [0, d) by a partial
// Fisher–Yates shuffle over an implicit identity array; only the touched
// slots are materialized, so memory is O(count).
[[nodiscard]] inline std::vector<Index> sample_without_replacement(Index d, Index count,
                                                                   Rng& rng) {
  std::unordered_map<Index, Index> displaced;
  displaced.reserve(static_cast<std::size_t>(count) * 2);
  const auto slot = [&](Index i) {
    const auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index t = 0; t < count; ++t) {
    const Index j = t + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(d - t)));
    out.push_back(slot(j));
    displaced[j] = slot(t);
  }
  return out;
}

// round(x) when x is within 1e-9 relative of an integer, else ceil(x).
// Guards sample-size arithmetic against binary-representation artifacts
// (0.01 * 1e6 evaluates to 10000.000000000002; literal ceil would make it
// 10001).
[[nodiscard]] inline Index snapped_ceil(double x) {
  const double r = static_cast<double>(std::llround(x));
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) {
    return static_cast<Index>(std::llround(x));
  }
  return static_cast<Index>(std::ceil(x));
}

}  // namespace detail

// Resolves the effective k of a spec for dimension d.
[[nodiscard]] inline Index resolve_k(const CompressorSpec& spec, Index d) {
  Index k = spec.k;
  if (k <= 0) {
    if (!(spec.k_ratio > 0.0 && spec.k_ratio <= 1.0)) {
      throw DomainError("resolve_k: k_ratio=" + std::to_string(spec.k_ratio) +
                        " must lie in (0,1] when k is not given");
    }
    k = std::max<Index>(1, static_cast<Index>(std::llround(spec.k_ratio * static_cast<double>(d))));
    k = std::min(k, d);
  }
  detail::check_k(k, d, "resolve_k");
  return k;
}

// ---------------------------------------------------------------------------
// top_k — exact selection of the k largest-magnitude coordinates.
// ---------------------------------------------------------------------------

// Partition-based (nth_element) exact top-k. Ties broken by smaller index.
// One allocation pass over the data; comparisons are not counted as passes.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> top_k(
    const Eigen::MatrixBase<Derived>& u, Index k, PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "top_k");
  std::vector<Index> idx(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (k < d) {
    std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(),
                     detail::MagnitudeGreater<Derived>{u});
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }
  return detail::gather(u, std::move(idx));
}

// Full-sort exact top-k: same contract and result as top_k, used as the
// second baseline in benchmarks (selection vs. sort brackets "exact top-k").
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> top_k_sort(
    const Eigen::MatrixBase<Derived>& u, Index k, PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "top_k_sort");
  std::vector<Index> idx(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), detail::MagnitudeGreater<Derived>{u});
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }
  return detail::gather(u, std::move(idx));
}

// ---------------------------------------------------------------------------
// rand_k — k uniform coordinates without replacement.
// ---------------------------------------------------------------------------

template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> rand_k(
    const Eigen::MatrixBase<Derived>& u, Index k, Rng& rng, PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "rand_k");
  std::vector<Index> idx = detail::sample_without_replacement(d, k, rng);
  std::sort(idx.begin(), idx.end());
  if (pc != nullptr) {
    pc->full_passes += 1;  // output/copy pass
    pc->elements_touched += k;
  }
  return detail::gather(u, std::move(idx));
}

// ---------------------------------------------------------------------------
// gaussian_k — quantile-threshold selection with multiplicative refinement.
// ---------------------------------------------------------------------------

// Algorithm: one fused pass measures mean, uncentered variance, min and max.
// The threshold is the folded two-sided Gaussian quantile
//
//     thres = | normal_ppf(0.5 + (1 - k/d)/2, 0, sigma) |
//
// i.e. the magnitude t with P(|X| > t) = k/d for X ~ N(0, sigma^2) — the
// positive magnitude threshold that matches the |u| > thres selection rule
// and makes the expected strict-exceedance count equal k on zero-centered
// bell-shaped data. (A one-sided quantile would double the expected count
// and destabilize the refinement.) The probability is clamped to
// [1e-12, 1-1e-12], so k = d maps to threshold 0 and selects every
// nonzero-magnitude coordinate.
//
// Refinement (at most refine_iters rounds): count = |{i : |u_i| > thres}|
// (strict); count < 2k/3 halves the threshold, count > 4k/3 multiplies it
// by 1.5, otherwise the loop breaks. The final selection takes every
// coordinate with |u_i| > final thres and is NOT truncated to k: the
// operator intentionally under- or over-sparsifies when the estimate is
// off, and the error-feedback loop absorbs the difference.
//
// Degenerate input: a constant vector (min == max, hence sigma = 0) falls
// back to the first k indices — any selection has equal error there.
//
// The single-pass sigma estimate is uncentered (E[x^2] - mean^2), which can
// lose precision when |mean| >> sigma; that only perturbs an *estimated*
// threshold, which the refinement loop then corrects. Pass bound:
// 1 (stats) + refine_iters (counts) + 1 (selection) <= 2 + 2*refine_iters.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> gaussian_k(
    const Eigen::MatrixBase<Derived>& u, Index k, int refine_iters = 4,
    PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "gaussian_k");
  if (refine_iters < 0) {
    throw DomainError("gaussian_k: refine_iters must be >= 0, got " +
                      std::to_string(refine_iters));
  }

  // Fused stats pass.
  NeumaierSum sum;
  NeumaierSum sumsq;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < d; ++i) {
    const double x = static_cast<double>(u.coeff(i));
    sum.add(x);
    sumsq.add(x * x);
    mn = std::min(mn, x);
    mx = std::max(mx, x);
  }
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }

  if (mn == mx) {
    // Constant vector: sigma is exactly 0, no magnitude ordering exists;
    // take the first k coordinates.
    std::vector<Index> idx(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (pc != nullptr) {
      pc->full_passes += 1;
      pc->elements_touched += k;
    }
    return detail::gather(u, std::move(idx));
  }

  const double mean = sum.value() / static_cast<double>(d);
  const double var = std::max(0.0, sumsq.value() / static_cast<double>(d) - mean * mean);
  const double sigma = std::sqrt(var);

  const double p_two =
      std::clamp(0.5 + 0.5 * (1.0 - static_cast<double>(k) / static_cast<double>(d)),
                 1e-12, 1.0 - 1e-12);
  double thres = std::abs(normal_ppf(p_two, 0.0, sigma));

  for (int iter = 0; iter < refine_iters; ++iter) {
    Index count = 0;
    for (Index i = 0; i < d; ++i) {
      if (std::abs(static_cast<double>(u.coeff(i))) > thres) ++count;
    }
    if (pc != nullptr) {
      pc->full_passes += 1;
      pc->elements_touched += d;
    }
    // Exact thirds: count < 2k/3  <=>  3*count < 2*k, etc.
    if (3 * count < 2 * k) {
      thres *= 0.5;
    } else if (3 * count > 4 * k) {
      thres *= 1.5;
    } else {
      break;
    }
  }

  std::vector<Index> idx;
  for (Index i = 0; i < d; ++i) {
    if (std::abs(static_cast<double>(u.coeff(i))) > thres) idx.push_back(i);
  }
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }
  return detail::gather(u, std::move(idx));
}

// ---------------------------------------------------------------------------
// dgc_k — sampled-threshold selection with a capped exact re-selection.
// ---------------------------------------------------------------------------

// Stage 1: uniformly sample s = ceil(sample_ratio * d) coordinates without
// replacement and run exact top-k' on the sample, k' = max(1,
// round(k * s / d)); the threshold is the smallest selected magnitude.
// Stage 2: collect every coordinate with |u_i| >= threshold (inclusive). If
// more than 2k are collected, a second exact top-k over the collected subset
// keeps exactly k (bounding the worst case); otherwise all collected
// coordinates are returned.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> dgc_k(
    const Eigen::MatrixBase<Derived>& u, Index k, double sample_ratio, Rng& rng,
    PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "dgc_k");
  if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) {
    throw DomainError("dgc_k: sample_ratio=" + std::to_string(sample_ratio) +
                      " must lie in (0,1]");
  }
  const Index s = std::min(d, std::max<Index>(1, detail::snapped_ceil(
                                                     sample_ratio * static_cast<double>(d))));

  // Stage 1: threshold from the sample.
  std::vector<Index> sample = detail::sample_without_replacement(d, s, rng);
  std::vector<double> sample_abs(sample.size());
  for (std::size_t j = 0; j < sample.size(); ++j) {
    sample_abs[j] = std::abs(static_cast<double>(u.coeff(sample[j])));
  }
  Index kp = std::max<Index>(
      1, static_cast<Index>(std::llround(static_cast<double>(k) * static_cast<double>(s) /
                                         static_cast<double>(d))));
  kp = std::min(kp, s);
  std::nth_element(sample_abs.begin(), sample_abs.begin() + (kp - 1), sample_abs.end(),
                   std::greater<double>());
  const double threshold = sample_abs[static_cast<std::size_t>(kp - 1)];
  if (pc != nullptr) {
    pc->full_passes += 1;  // sampling + sample selection stage
    pc->elements_touched += s;
  }

  // Stage 2: full scan, inclusive comparison.
  std::vector<Index> collected;
  for (Index i = 0; i < d; ++i) {
    if (std::abs(static_cast<double>(u.coeff(i))) >= threshold) collected.push_back(i);
  }
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }

  if (static_cast<Index>(collected.size()) > 2 * k) {
    // Second exact top-k, restricted to the collected subset.
    std::nth_element(collected.begin(), collected.begin() + (k - 1), collected.end(),
                     detail::MagnitudeGreater<Derived>{u});
    const Index n_collected = static_cast<Index>(collected.size());
    collected.resize(static_cast<std::size_t>(k));
    std::sort(collected.begin(), collected.end());
    if (pc != nullptr) {
      pc->full_passes += 1;
      pc->elements_touched += n_collected;
    }
  }
  return detail::gather(u, std::move(collected));
}

// ---------------------------------------------------------------------------
// trimmed_k — threshold search between the max and the mean magnitude.
// ---------------------------------------------------------------------------

// Deterministic schedule: with M = ||u||_inf and A = mean(|u|), try
// thres = A + r*(M - A) for r = 0.99, 0.9*0.99, ... until
// count(|u_i| > thres) >= k or r < 1e-4. On the bottom-out exit the
// threshold clamps to 0 so every nonzero-magnitude coordinate is selected
// (the all-coordinates limit; with a strict comparison the un-clamped
// threshold A + r*(M - A) > 0 could select nothing, e.g. on near-constant
// magnitudes where A == M). The count may exceed k — the operator
// over-selects by design. All-zero input (M == 0) is a degenerate-input
// error. This exact schedule (r0 = 0.99, decay 0.9, floor 1e-4) is this
// library's deterministic rendering of the published heuristic.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> trimmed_k(
    const Eigen::MatrixBase<Derived>& u, Index k, PassCounter* pc = nullptr) {
  const Index d = u.size();
  detail::check_k(k, d, "trimmed_k");

  NeumaierSum abs_sum;
  double M = 0.0;
  for (Index i = 0; i < d; ++i) {
    const double a = std::abs(static_cast<double>(u.coeff(i)));
    abs_sum.add(a);
    M = std::max(M, a);
  }
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }
  if (M == 0.0) {
    throw DegenerateInputError("trimmed_k: all-zero vector has no magnitude ordering");
  }
  const double A = abs_sum.value() / static_cast<double>(d);

  double thres = 0.0;
  bool found = false;
  for (double r = 0.99; r >= 1e-4; r *= 0.9) {
    thres = A + r * (M - A);
    Index count = 0;
    for (Index i = 0; i < d; ++i) {
      if (std::abs(static_cast<double>(u.coeff(i))) > thres) ++count;
    }
    if (pc != nullptr) {
      pc->full_passes += 1;
      pc->elements_touched += d;
    }
    if (count >= k) {
      found = true;
      break;
    }
  }
  if (!found) {
    thres = 0.0;
  }

  std::vector<Index> idx;
  for (Index i = 0; i < d; ++i) {
    if (std::abs(static_cast<double>(u.coeff(i))) > thres) idx.push_back(i);
  }
  if (pc != nullptr) {
    pc->full_passes += 1;
    pc->elements_touched += d;
  }
  return detail::gather(u, std::move(idx));
}

// ---------------------------------------------------------------------------
// Uniform dispatch.
// ---------------------------------------------------------------------------

// Compresses with an explicit RNG stream (training advances one stream per
// worker across iterations). The RNG is only consumed by randk/dgck.
template <typename Derived>
[[nodiscard]] SparseSelection<typename Derived::Scalar> compress_with_rng(
    const CompressorSpec& spec, const Eigen::MatrixBase<Derived>& u, Rng& rng,
    PassCounter* pc = nullptr) {
  const Index k = resolve_k(spec, u.size());
  switch (spec.kind) {
    case CompressorKind::topk: return top_k(u, k, pc);
    case CompressorKind::randk: return rand_k(u, k, rng, pc);
    case CompressorKind::gaussiank: return gaussian_k(u, k, spec.refine_iters, pc);
    case CompressorKind::dgck: return dgc_k(u, k, spec.sample_ratio, rng, pc);
    case CompressorKind::trimmedk: return trimmed_k(u, k, pc);
  }
  throw DomainError("compress: unknown compressor kind");
}

// Pure-function dispatch: the RNG is constructed from spec.seed, so equal
// (spec, u) always produce identical output.
template <typename Derived>
[[nodiscard]] std::pair<SparseSelection<typename Derived::Scalar>, PassCounter> compress(
    const CompressorSpec& spec, const Eigen::MatrixBase<Derived>& u) {
  PassCounter pc;
  Rng rng(spec.seed);
  auto sel = compress_with_rng(spec, u, rng, &pc);
  return {std::move(sel), pc};
}

}  // namespace sparsecomm
