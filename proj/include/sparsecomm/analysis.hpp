// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Numerical validation harnesses for the compression-error mathematics:
//
//   exact_ratio         — discarded-energy fraction of exact top-k
//   bound_report        — exact ratio vs. the loose (1-k/d) and tight
//                         (1-k/d)^2 contraction bounds over a k sweep
//   pi_shape_check      — convexity / reference-line tests on the sorted,
//                         max-normalized squared magnitudes
//   area_inequality     — the four-term ratio inequality underlying the
//                         tight bound's proof
//   histogram           — equal-width histogram + empirical CDF
//   randk_expectation_check — Monte Carlo check that uniform-k discards
//                         (1-k/d) of the energy in expectation
//
// The tight bound holds for bell-shaped (unimodal, zero-centered) inputs;
// constant vectors violate it and are kept available as negative controls.
// All randomness is seeded; every function is deterministic given its
// arguments.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sparsecomm/compressors.hpp"
#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/csv.hpp"
#include "sparsecomm/rng.hpp"

namespace sparsecomm {

// ---------------------------------------------------------------------------
// Synthetic test vectors.
// ---------------------------------------------------------------------------

// gaussian / laplace are bell-shaped; uniform / constant are the controls
// that break the bell-shape hypothesis.
enum class TestDist { gaussian, laplace, uniform, constant };

[[nodiscard]] inline std::string to_string(TestDist dist) {
  switch (dist) {
    case TestDist::gaussian: return "gaussian";
    case TestDist::laplace: return "laplace";
    case TestDist::uniform: return "uniform";
    case TestDist::constant: return "constant";
  }
  return "?";
}

[[nodiscard]] inline TestDist parse_test_dist(const std::string& name) {
  if (name == "gaussian") return TestDist::gaussian;
  if (name == "laplace") return TestDist::laplace;
  if (name == "uniform") return TestDist::uniform;
  if (name == "constant") return TestDist::constant;
  throw FormatError("unknown distribution '" + name +
                    "' (expected gaussian|laplace|uniform|constant)");
}

// Deterministic seeded vector: N(0,1), Laplace(0,1), U(-1,1), or all-ones.
[[nodiscard]] inline VecX<double> make_test_vector(TestDist dist, Index d, std::uint64_t seed) {
  if (d < 1) throw DimensionError("make_test_vector: d must be >= 1");
  VecX<double> u(d);
  Rng rng(seed);
  switch (dist) {
    case TestDist::gaussian:
      for (Index i = 0; i < d; ++i) u[i] = rng.next_gaussian();
      break;
    case TestDist::laplace:
      for (Index i = 0; i < d; ++i) u[i] = rng.next_laplace();
      break;
    case TestDist::uniform:
      for (Index i = 0; i < d; ++i) u[i] = 2.0 * rng.next_double() - 1.0;
      break;
    case TestDist::constant:
      u.setOnes();
      break;
  }
  return u;
}

// ---------------------------------------------------------------------------
// Discarded-energy ratio.
// ---------------------------------------------------------------------------

// ||u - densify(s)||^2 / ||u||^2, computed without forming the difference:
// the residual of a selection is u with the selected coordinates zeroed,
// so the numerator is the energy of the unselected coordinates (summed
// compensated, no cancellation). Throws on all-zero u.
[[nodiscard]] inline double discarded_energy_ratio(const VecX<double>& u,
                                                   const SparseSelection<double>& s) {
  s.validate();
  if (s.d != u.size()) {
    throw StructuralError("discarded_energy_ratio: selection d=" + std::to_string(s.d) +
                          " vs vector d=" + std::to_string(u.size()));
  }
  NeumaierSum total;
  NeumaierSum residual;
  std::size_t j = 0;
  for (Index i = 0; i < u.size(); ++i) {
    const double sq = u[i] * u[i];
    total.add(sq);
    if (j < s.indices.size() && s.indices[j] == i) {
      ++j;  // selected: contributes to total only
    } else {
      residual.add(sq);
    }
  }
  if (!(total.value() > 0.0)) {
    throw DegenerateInputError("discarded_energy_ratio: zero vector");
  }
  return residual.value() / total.value();
}

// Exact top-k discarded-energy fraction, direct path.
[[nodiscard]] inline double exact_ratio(const VecX<double>& u, Index k) {
  return discarded_energy_ratio(u, top_k(u, k));
}

// Same quantity from sorted normalized magnitudes pi (descending, pi[0]=1):
// tail(k) / total of pi^2. Must agree with exact_ratio within 1e-10
// relative; the unit tests assert that two-path agreement.
[[nodiscard]] inline double exact_ratio_from_pi(const VecX<double>& pi, Index k) {
  const Index d = pi.size();
  detail::check_k(k, d, "exact_ratio_from_pi");
  NeumaierSum total;
  NeumaierSum tail;
  for (Index i = 0; i < d; ++i) {
    const double sq = pi[i] * pi[i];
    total.add(sq);
    if (i >= k) tail.add(sq);
  }
  return tail.value() / total.value();
}

// ---------------------------------------------------------------------------
// Bound report.
// ---------------------------------------------------------------------------

struct BoundReportRow {
  Index k = 0;
  double exact_ratio = 0.0;   // discarded-energy fraction of exact top-k
  double loose_bound = 0.0;   // 1 - k/d
  double tight_bound = 0.0;   // (1 - k/d)^2; valid for bell-shaped inputs
};

// One row per k. Sorts the magnitude profile once and reads each k off a
// compensated suffix sum, so a multi-k sweep costs one sort. Rows keep the
// caller's k order.
[[nodiscard]] inline std::vector<BoundReportRow> bound_report(const VecX<double>& u,
                                                              const std::vector<Index>& ks) {
  const Index d = u.size();
  const VecX<double> pi = sorted_pi(u);
  // suffix[i] = sum of pi[j]^2 for j >= i (compensated, accumulated from the
  // tail so each prefix of the accumulation is itself a valid suffix sum).
  std::vector<double> suffix(static_cast<std::size_t>(d) + 1, 0.0);
  NeumaierSum acc;
  for (Index i = d - 1; i >= 0; --i) {
    acc.add(pi[i] * pi[i]);
    suffix[static_cast<std::size_t>(i)] = acc.value();
  }
  const double total = suffix[0];

  std::vector<BoundReportRow> rows;
  rows.reserve(ks.size());
  for (const Index k : ks) {
    detail::check_k(k, d, "bound_report");
    BoundReportRow row;
    row.k = k;
    row.exact_ratio = suffix[static_cast<std::size_t>(k)] / total;
    row.loose_bound = 1.0 - static_cast<double>(k) / static_cast<double>(d);
    row.tight_bound = row.loose_bound * row.loose_bound;
    rows.push_back(row);
  }
  return rows;
}

// bound_report.csv: k,exact_ratio,loose_bound,tight_bound.
inline void write_bound_report_csv(const std::vector<BoundReportRow>& rows,
                                   const std::filesystem::path& path) {
  CsvWriter w(path, {"k", "exact_ratio", "loose_bound", "tight_bound"});
  for (const auto& r : rows) {
    w.row(r.k, r.exact_ratio, r.loose_bound, r.tight_bound);
  }
}

// ---------------------------------------------------------------------------
// Shape of the sorted squared magnitude profile.
// ---------------------------------------------------------------------------

struct PiShapeResult {
  long long convex_violations = 0;
  long long line_violations = 0;
  Index skip_head = 0;  // leading indices excluded from the line check
  Index stride = 1;     // sampling stride used for the convexity check
};

// Reference line through (1, 1) and (d, 0) in 1-based index coordinates:
// line(i) = 1 - (i-1)/(d-1). For bell-shaped inputs the sorted profile
// s_i = pi_(i)^2 is expected to run at or below this line except for a short
// head (the profile starts exactly at 1, the line's own anchor, and the
// first few order statistics sit on top of it), hence the head skip of
// max(1, round(1e-4 * d)) indices. Convexity is checked via second
// differences s_{i+1} - 2 s_i + s_{i-1} >= -tol at interior indices,
// sampled every max(1, d/10000) indices when d > 1e6 to bound runtime.
[[nodiscard]] inline PiShapeResult pi_shape_check(const VecX<double>& u, double tol = 1e-12) {
  const VecX<double> pi = sorted_pi(u);
  const Index d = pi.size();
  PiShapeResult res;
  res.skip_head = std::max<Index>(1, static_cast<Index>(std::llround(1e-4 * static_cast<double>(d))));
  res.stride = d > 1000000 ? d / 10000 : 1;
  if (d == 1) return res;

  VecX<double> s = pi.cwiseProduct(pi);

  // Convexity: 0-based interior j in [1, d-2], stepping by stride.
  for (Index j = 1; j + 1 < d; j += res.stride) {
    const double second = s[j + 1] - 2.0 * s[j] + s[j - 1];
    if (second < -tol) ++res.convex_violations;
  }

  // Reference line: 1-based i in (skip_head, d].
  const double dm1 = static_cast<double>(d - 1);
  for (Index i = res.skip_head + 1; i <= d; ++i) {
    const double line = 1.0 - static_cast<double>(i - 1) / dm1;
    if (s[i - 1] > line + tol) ++res.line_violations;
  }
  return res;
}

// pi_shape.csv: i (1-based), pi_sq, line. Rows sampled with the same stride
// rule as the convexity check so huge d stays plottable.
inline void write_pi_shape_csv(const VecX<double>& u, const std::filesystem::path& path) {
  const VecX<double> pi = sorted_pi(u);
  const Index d = pi.size();
  const Index stride = d > 1000000 ? d / 10000 : 1;
  const double dm1 = d > 1 ? static_cast<double>(d - 1) : 1.0;
  CsvWriter w(path, {"i", "pi_sq", "line"});
  for (Index i = 1; i <= d; i += stride) {
    const double line = 1.0 - static_cast<double>(i - 1) / dm1;
    w.row(i, pi[i - 1] * pi[i - 1], line);
  }
}

// ---------------------------------------------------------------------------
// Area inequality.
// ---------------------------------------------------------------------------

// Whether A1/(A1+A2+A3) <= (A1+A4)/(A1+A2+A4) for nonnegative areas. True on
// the whole valid domain (the difference reduces to A1*A3 + A4*A2 + A4*A3
// over a positive denominator); exposed as a checkable predicate rather
// than a constant so the property tests exercise the actual arithmetic.
[[nodiscard]] inline bool area_inequality(double a1, double a2, double a3, double a4) {
  for (const double a : {a1, a2, a3, a4}) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw DomainError("area_inequality: inputs must be finite and >= 0");
    }
  }
  const double den1 = a1 + a2 + a3;
  const double den2 = a1 + a2 + a4;
  if (!(den1 > 0.0) || !(den2 > 0.0)) {
    throw DomainError("area_inequality: zero denominator (need A1+A2+A3 > 0 and A1+A2+A4 > 0)");
  }
  return a1 / den1 <= (a1 + a4) / den2;
}

// ---------------------------------------------------------------------------
// Histogram / empirical CDF.
// ---------------------------------------------------------------------------

struct HistogramData {
  std::vector<double> bin_edges;   // bins + 1 edges, ascending
  std::vector<long long> counts;   // per bin; sums to d
  std::vector<double> cdf;         // nondecreasing, ends at 1
};

// Equal-width bins over [min, max]; the top edge belongs to the last bin.
// A constant vector puts everything in bin 0. Non-finite input values are a
// numerical error (a histogram with NaN edges would be silently useless).
[[nodiscard]] inline HistogramData histogram(const VecX<double>& u, int bins) {
  const Index d = u.size();
  if (d < 1) throw DimensionError("histogram: empty vector");
  if (bins < 1) throw DomainError("histogram: bins must be >= 1");
  double mn = u[0];
  double mx = u[0];
  for (Index i = 0; i < d; ++i) {
    if (!std::isfinite(u[i])) {
      throw NumericalError("histogram: non-finite value at index " + std::to_string(i));
    }
    mn = std::min(mn, u[i]);
    mx = std::max(mx, u[i]);
  }

  HistogramData h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  const double span = mx - mn;
  for (int b = 0; b <= bins; ++b) {
    h.bin_edges[static_cast<std::size_t>(b)] =
        mn + span * (static_cast<double>(b) / static_cast<double>(bins));
  }
  h.bin_edges.back() = mx;

  for (Index i = 0; i < d; ++i) {
    int b = 0;
    if (span > 0.0) {
      b = static_cast<int>((u[i] - mn) / span * static_cast<double>(bins));
      b = std::clamp(b, 0, bins - 1);
    }
    ++h.counts[static_cast<std::size_t>(b)];
  }

  h.cdf.resize(static_cast<std::size_t>(bins));
  long long cum = 0;
  for (int b = 0; b < bins; ++b) {
    cum += h.counts[static_cast<std::size_t>(b)];
    h.cdf[static_cast<std::size_t>(b)] = static_cast<double>(cum) / static_cast<double>(d);
  }
  return h;
}

// Histogram CSV: bin_lo,bin_hi,count,cdf (one row per bin).
inline void write_histogram_csv(const HistogramData& h, const std::filesystem::path& path) {
  CsvWriter w(path, {"bin_lo", "bin_hi", "count", "cdf"});
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    w.row(h.bin_edges[b], h.bin_edges[b + 1], h.counts[b], h.cdf[b]);
  }
}

// ---------------------------------------------------------------------------
// Uniform-selection expectation check.
// ---------------------------------------------------------------------------

struct RandkCheckResult {
  double mean_ratio = 0.0;  // Monte Carlo mean of discarded-energy ratios
  double target = 0.0;      // 1 - k/d, the exact expectation
};

// Monte Carlo estimate of E[||u - rand_k(u)||^2 / ||u||^2]. Trial t draws
// from substream (seed, t+1, 0), so trials are independent and the set of
// trials is reproducible regardless of evaluation order; the mean is
// accumulated compensated in trial order.
[[nodiscard]] inline RandkCheckResult randk_expectation_check(const VecX<double>& u, Index k,
                                                              int trials, std::uint64_t seed) {
  const Index d = u.size();
  detail::check_k(k, d, "randk_expectation_check");
  if (trials < 1) throw DomainError("randk_expectation_check: trials must be >= 1");
  NeumaierSum mean_acc;
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(t) + 1, 0);
    const SparseSelection<double> s = rand_k(u, k, rng);
    mean_acc.add(discarded_energy_ratio(u, s));
  }
  RandkCheckResult res;
  res.mean_ratio = mean_acc.value() / static_cast<double>(trials);
  res.target = 1.0 - static_cast<double>(k) / static_cast<double>(d);
  return res;
}

// randk_check.csv: d,k,trials,mean_ratio,target (single row).
inline void write_randk_check_csv(Index d, Index k, int trials, const RandkCheckResult& r,
                                  const std::filesystem::path& path) {
  CsvWriter w(path, {"d", "k", "trials", "mean_ratio", "target"});
  w.row(d, k, trials, r.mean_ratio, r.target);
}

}  // namespace sparsecomm
