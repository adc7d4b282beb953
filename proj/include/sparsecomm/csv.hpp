// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Minimal deterministic CSV emission: '.' decimal separator regardless of
// locale, shortest round-trip number formatting (std::to_chars), '\n' line
// endings, one header row. Identical data always serializes to identical
// bytes, which the determinism contract of the CLI depends on.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <system_error>

#include "sparsecomm/core_vector.hpp"

namespace sparsecomm {

// Shortest representation that round-trips to the same double.
[[nodiscard]] inline std::string csv_cell(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string csv_cell(long long v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string csv_cell(Index v) { return csv_cell(static_cast<long long>(v)); }
[[nodiscard]] inline std::string csv_cell(int v) { return csv_cell(static_cast<long long>(v)); }
[[nodiscard]] inline std::string csv_cell(std::string_view v) { return std::string(v); }

class CsvWriter {
 public:
  // Opens `path` for writing (binary: no platform newline translation) and
  // emits the header row. Throws IoError if the file cannot be created.
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) {
      throw IoError("cannot open for writing: " + path.string());
    }
    bool first = true;
    for (const auto& h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  // Writes one row; cells may be any mix of numeric types and strings.
  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ","), out_ << csv_cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace sparsecomm
