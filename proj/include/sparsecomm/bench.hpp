// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Compressor cost comparison with two metrics:
//
//   wall_ms_median — median wall-clock time of `repeats` identical runs
//                    after one warm-up (machine-dependent, informational
//                    only; masked out of determinism comparisons)
//   full_passes    — instrumented O(d) sweep count (deterministic and
//                    machine-independent; this is what tests assert)
//
// Exact top-k is benchmarked two ways (partition-based and full-sort), since
// "efficient" is implementation-relative; the sort variant is keyed as
// "topk_sort" in rows and CSV. Quality is summarized as recall against the
// exact top-k selection computed once per dimension. Runs are
// single-threaded for stable timings.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "sparsecomm/analysis.hpp"
#include "sparsecomm/compressors.hpp"
#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/csv.hpp"
#include "sparsecomm/rng.hpp"

namespace sparsecomm {

struct BenchRow {
  Index d = 0;
  Index k = 0;
  std::string kind;              // compressor name, or "topk_sort"
  double wall_ms_median = 0.0;
  int full_passes = 0;
  Index selected_count = 0;
  double recall = 0.0;           // |selected ∩ exact top-k| / k
};

struct BenchOptions {
  std::vector<Index> dims;
  double k_ratio = 0.001;
  std::vector<std::string> kinds;  // compressor names; "topk_sort" allowed
  int repeats = 5;
  std::uint64_t seed = 0;
  bool fp32 = false;           // benchmark on float32 data instead of float64
  double sample_ratio = 0.01;  // dgck
  int refine_iters = 4;        // gaussiank
};

namespace detail {

// Peak transient footprint of one benchmark dimension: the data vector plus
// the index scratch array the exact top-k baselines allocate. Checked
// against currently available physical memory BEFORE any allocation so an
// oversized --dims fails with a sized message instead of an OOM kill.
inline void bench_memory_preflight(Index d, std::size_t scalar_size) {
  const double need = static_cast<double>(d) * (static_cast<double>(scalar_size) +
                                                static_cast<double>(sizeof(Index)) + 8.0);
  const long pages = sysconf(_SC_AVPHYS_PAGES);
  const long page_size = sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page_size <= 0) return;  // cannot measure; proceed
  const double avail = static_cast<double>(pages) * static_cast<double>(page_size);
  if (need > 0.9 * avail) {
    const double mib = 1024.0 * 1024.0;
    throw Error("bench: d=" + std::to_string(d) + " needs ~" +
                std::to_string(static_cast<long long>(need / mib)) + " MiB but only " +
                std::to_string(static_cast<long long>(avail / mib)) +
                " MiB of physical memory is available");
  }
}

// Ascending sorted index overlap (both inputs ascending by construction).
inline Index sorted_overlap(const std::vector<Index>& a, const std::vector<Index>& b) {
  Index n = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

template <typename Scalar>
std::vector<BenchRow> run_bench_typed(const BenchOptions& opt) {
  if (opt.dims.empty()) throw DomainError("bench: at least one dimension required");
  if (opt.kinds.empty()) throw DomainError("bench: at least one compressor kind required");
  if (opt.repeats < 3) {
    throw DomainError("bench: repeats must be >= 3, got " + std::to_string(opt.repeats));
  }
  if (!(opt.k_ratio > 0.0 && opt.k_ratio <= 1.0)) {
    throw DomainError("bench: k_ratio must lie in (0,1]");
  }
  // Validate kind names up front (parse_compressor_kind throws on unknowns).
  for (const std::string& name : opt.kinds) {
    if (name != "topk_sort") (void)parse_compressor_kind(name);
  }

  std::vector<BenchRow> rows;
  for (const Index d : opt.dims) {
    if (d < 1) throw DomainError("bench: dimension must be >= 1");
    bench_memory_preflight(d, sizeof(Scalar));

    VecX<Scalar> u(d);
    {
      Rng gen = Rng::substream(opt.seed, static_cast<std::uint64_t>(d), 0);
      for (Index i = 0; i < d; ++i) u[i] = static_cast<Scalar>(gen.next_gaussian());
    }
    const Index k = resolve_k(CompressorSpec{CompressorKind::topk, 0, opt.k_ratio, 0.01, 4, 0}, d);
    const std::vector<Index> exact_indices = top_k(u, k).indices;

    for (std::size_t kind_i = 0; kind_i < opt.kinds.size(); ++kind_i) {
      const std::string& name = opt.kinds[kind_i];
      // One identical call per repeat: RNG-consuming kinds get the same
      // freshly-constructed stream every time, so only the clock varies.
      const auto run_once = [&](PassCounter* pc) {
        if (name == "topk_sort") return top_k_sort(u, k, pc);
        CompressorSpec spec;
        spec.kind = parse_compressor_kind(name);
        spec.k = k;
        spec.sample_ratio = opt.sample_ratio;
        spec.refine_iters = opt.refine_iters;
        Rng rng = Rng::substream(opt.seed, static_cast<std::uint64_t>(d), 10 + kind_i);
        return compress_with_rng(spec, u, rng, pc);
      };

      (void)run_once(nullptr);  // warm-up

      std::vector<double> times_ms;
      times_ms.reserve(static_cast<std::size_t>(opt.repeats));
      SparseSelection<Scalar> sel;
      PassCounter pc;
      for (int r = 0; r < opt.repeats; ++r) {
        PassCounter pc_run;
        const auto t0 = std::chrono::steady_clock::now();
        sel = run_once(&pc_run);
        const auto t1 = std::chrono::steady_clock::now();
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        pc = pc_run;
      }
      std::sort(times_ms.begin(), times_ms.end());
      const std::size_t mid = times_ms.size() / 2;
      const double median = times_ms.size() % 2 == 1
                                ? times_ms[mid]
                                : 0.5 * (times_ms[mid - 1] + times_ms[mid]);

      BenchRow row;
      row.d = d;
      row.k = k;
      row.kind = name;
      row.wall_ms_median = median;
      row.full_passes = pc.full_passes;
      row.selected_count = sel.size();
      row.recall = static_cast<double>(sorted_overlap(sel.indices, exact_indices)) /
                   static_cast<double>(k);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace detail

[[nodiscard]] inline std::vector<BenchRow> run_bench(const BenchOptions& opt) {
  return opt.fp32 ? detail::run_bench_typed<float>(opt) : detail::run_bench_typed<double>(opt);
}

// bench.csv: d,k,kind,wall_ms_median,full_passes,selected_count,recall.
inline void write_bench_csv(const std::vector<BenchRow>& rows,
                            const std::filesystem::path& path) {
  CsvWriter w(path, {"d", "k", "kind", "wall_ms_median", "full_passes", "selected_count",
                     "recall"});
  for (const auto& r : rows) {
    w.row(r.d, r.k, std::string_view(r.kind), r.wall_ms_median, r.full_passes,
          r.selected_count, r.recall);
  }
}

}  // namespace sparsecomm
