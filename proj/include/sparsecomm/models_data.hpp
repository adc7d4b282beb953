// sparsecomm — gradient sparsification toolkit
// Copyright (c) 2026 The sparsecomm Authors
// SPDX-License-Identifier: MIT
//
// Desk-scale differentiable models and dataset ingestion: an IDX
// (MNIST-format) reader, a seeded synthetic Gaussian-class dataset, and two
// models (multinomial logistic regression; one-hidden-layer MLP) with exact
// analytic gradients. Gradients are plain dense vectors, so the compressors
// and the training engine operate on them directly.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sparsecomm/core_vector.hpp"
#include "sparsecomm/rng.hpp"

namespace sparsecomm {

// ---------------------------------------------------------------------------
// Datasets.
// ---------------------------------------------------------------------------

// Feature matrix (one row per sample) plus integer labels in [0, C).
struct Dataset {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> X;  // n x m
  std::vector<int> y;                                       // length n
  int C = 0;

  [[nodiscard]] Index n() const { return X.rows(); }
  [[nodiscard]] Index m() const { return X.cols(); }
};

namespace detail {

[[nodiscard]] inline std::vector<unsigned char> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset file: " + path.string());
  }
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

// Big-endian 32-bit read with truncation diagnostics naming the offset.
[[nodiscard]] inline std::uint32_t be32_at(const std::vector<unsigned char>& b,
                                           std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) {
    throw FormatError("truncated IDX file (wanted 4 bytes at offset " + std::to_string(off) +
                      ", file has " + std::to_string(b.size()) + "): " + path);
  }
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace detail

// Parses the big-endian IDX pair used by MNIST: images with magic
// 0x00000803 (dimensions n, rows, cols; unsigned bytes) and labels with
// magic 0x00000801 (dimension n). Pixels are scaled to [0, 1] without mean
// subtraction. Throws FormatError (naming the byte offset) on bad magic or
// truncation, and if the two files disagree on n. Label classes: C = 10.
[[nodiscard]] inline Dataset load_idx(const std::filesystem::path& images_path,
                                      const std::filesystem::path& labels_path) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);

  const std::uint32_t img_magic = detail::be32_at(img, 0, images_path.string());
  if (img_magic != 0x00000803u) {
    throw FormatError("bad IDX image magic 0x" + std::to_string(img_magic) +
                      " at offset 0 (expected 0x00000803): " + images_path.string());
  }
  const std::uint32_t lab_magic = detail::be32_at(lab, 0, labels_path.string());
  if (lab_magic != 0x00000801u) {
    throw FormatError("bad IDX label magic 0x" + std::to_string(lab_magic) +
                      " at offset 0 (expected 0x00000801): " + labels_path.string());
  }

  const std::uint32_t n = detail::be32_at(img, 4, images_path.string());
  const std::uint32_t rows = detail::be32_at(img, 8, images_path.string());
  const std::uint32_t cols = detail::be32_at(img, 12, images_path.string());
  const std::uint32_t n_lab = detail::be32_at(lab, 4, labels_path.string());
  if (n != n_lab) {
    throw FormatError("IDX image/label count mismatch: images n=" + std::to_string(n) +
                      ", labels n=" + std::to_string(n_lab));
  }
  const std::size_t m = std::size_t(rows) * std::size_t(cols);
  const std::size_t want_img = 16 + std::size_t(n) * m;
  if (img.size() < want_img) {
    throw FormatError("truncated IDX image data (wanted " + std::to_string(want_img) +
                      " bytes, file has " + std::to_string(img.size()) +
                      "; data begins at offset 16): " + images_path.string());
  }
  const std::size_t want_lab = 8 + std::size_t(n);
  if (lab.size() < want_lab) {
    throw FormatError("truncated IDX label data (wanted " + std::to_string(want_lab) +
                      " bytes, file has " + std::to_string(lab.size()) +
                      "; data begins at offset 8): " + labels_path.string());
  }

  Dataset ds;
  ds.C = 10;
  ds.X.resize(Index(n), Index(m));
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      ds.X(Index(i), Index(j)) = double(img[16 + i * m + j]) / 255.0;
    }
    ds.y[i] = int(lab[8 + i]);
    if (ds.y[i] >= ds.C) {
      throw FormatError("IDX label " + std::to_string(ds.y[i]) + " at offset " +
                        std::to_string(8 + i) + " exceeds class range [0,10): " +
                        labels_path.string());
    }
  }
  return ds;
}

// Seeded synthetic classification set: class c has a fixed unit direction
// (a normalized Gaussian draw), features are standard normal plus
// radius * direction[class], labels cycle 0,1,...,C-1. With label_noise > 0
// that fraction of labels is re-drawn uniformly over [0, C) after the
// features are generated, giving the task an irreducible loss floor while
// leaving the feature distribution untouched. Deterministic under seed:
// substream (seed,1,0) draws directions, (seed,2,0) features, (seed,3,0)
// the noise mask.
[[nodiscard]] inline Dataset synth_dataset(std::uint64_t seed, Index n, Index m, int C,
                                           double radius = 1.5, double label_noise = 0.0) {
  if (n < 1 || m < 1 || C < 1) {
    throw DomainError("synth_dataset: n, m, C must all be >= 1");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw DomainError("synth_dataset: label_noise must lie in [0,1]");
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> dirs(C, m);
  Rng rng_dirs = Rng::substream(seed, 1, 0);
  for (int c = 0; c < C; ++c) {
    for (Index j = 0; j < m; ++j) {
      dirs(c, j) = rng_dirs.next_gaussian();
    }
    const double norm = dirs.row(c).norm();
    if (norm > 0.0) {
      dirs.row(c) /= norm;
    } else {
      dirs(c, 0) = 1.0;  // unreachable in practice; keeps the row a unit vector
    }
  }

  Dataset ds;
  ds.C = C;
  ds.X.resize(n, m);
  ds.y.resize(std::size_t(n));
  Rng rng_x = Rng::substream(seed, 2, 0);
  for (Index i = 0; i < n; ++i) {
    const int c = int(i % C);
    ds.y[std::size_t(i)] = c;
    for (Index j = 0; j < m; ++j) {
      ds.X(i, j) = rng_x.next_gaussian() + radius * dirs(c, j);
    }
  }
  if (label_noise > 0.0) {
    Rng rng_noise = Rng::substream(seed, 3, 0);
    for (Index i = 0; i < n; ++i) {
      if (rng_noise.next_double() < label_noise) {
        ds.y[std::size_t(i)] = int(rng_noise.next_below(std::uint64_t(C)));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Models.
// ---------------------------------------------------------------------------

enum class Activation { relu, tanh };
enum class ModelKind { logreg, mlp };

// Architecture descriptor. logreg ignores hidden/act.
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  Index in = 784;
  Index hidden = 100;
  int classes = 10;
  Activation act = Activation::relu;
};

[[nodiscard]] inline Index param_count(const ModelSpec& s) {
  if (s.kind == ModelKind::logreg) {
    return s.in * s.classes + s.classes;
  }
  return s.in * s.hidden + s.hidden + s.hidden * s.classes + s.classes;
}

// Xavier-uniform weights (U(+-sqrt(6/(fan_in+fan_out)))), zero biases.
// Parameter layout (column-major within each matrix):
//   logreg: [W (C x in), b (C)]
//   mlp:    [W1 (hidden x in), b1 (hidden), W2 (C x hidden), b2 (C)]
[[nodiscard]] inline VecX<double> model_init(const ModelSpec& s, std::uint64_t seed) {
  VecX<double> params = VecX<double>::Zero(param_count(s));
  Rng rng = Rng::substream(seed, 4, 0);
  const auto fill_xavier = [&](double* data, Index count, Index fan_in, Index fan_out) {
    const double lim = std::sqrt(6.0 / double(fan_in + fan_out));
    for (Index i = 0; i < count; ++i) {
      data[i] = (2.0 * rng.next_double() - 1.0) * lim;
    }
  };
  if (s.kind == ModelKind::logreg) {
    fill_xavier(params.data(), s.in * s.classes, s.in, s.classes);
  } else {
    fill_xavier(params.data(), s.in * s.hidden, s.in, s.hidden);
    fill_xavier(params.data() + s.in * s.hidden + s.hidden, s.hidden * s.classes, s.hidden,
                s.classes);
  }
  return params;
}

namespace detail {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

// Numerically stable softmax cross-entropy over logits (one row per
// sample): subtracts the row max, returns mean loss and fills probs.
// Throws NumericalError if the loss is not finite.
[[nodiscard]] inline double softmax_xent(const Mat& logits, const std::vector<int>& y,
                                         const Index* batch, Index B, Mat& probs) {
  probs.resize(logits.rows(), logits.cols());
  NeumaierSum loss;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - mx).eval();
    const double denom = shifted.exp().sum();
    probs.row(i) = (shifted - std::log(denom)).exp().matrix();
    const int yi = y[std::size_t(batch ? batch[i] : i)];
    loss.add(std::log(denom) - shifted(yi));
  }
  const double mean_loss = loss.value() / double(B);
  if (!std::isfinite(mean_loss)) {
    throw NumericalError("softmax cross-entropy produced a non-finite loss");
  }
  return mean_loss;
}

}  // namespace detail

// Mean cross-entropy loss over the batch and its exact gradient with
// respect to the flattened parameters. `batch` holds row indices into ds.X;
// analytic backpropagation (closed form for logreg). Throws NumericalError
// on a non-finite loss, DimensionError/StructuralError on shape mismatches.
[[nodiscard]] inline std::pair<double, VecX<double>> model_loss_grad(
    const ModelSpec& s, const VecX<double>& params, const Dataset& ds,
    const std::vector<Index>& batch) {
  if (batch.empty()) {
    throw DimensionError("model_loss_grad: empty batch");
  }
  if (params.size() != param_count(s)) {
    throw StructuralError("model_loss_grad: parameter vector has length " +
                          std::to_string(params.size()) + ", model needs " +
                          std::to_string(param_count(s)));
  }
  if (ds.m() != s.in || ds.C != s.classes) {
    throw StructuralError("model_loss_grad: dataset shape (m=" + std::to_string(ds.m()) +
                          ", C=" + std::to_string(ds.C) + ") does not match model (in=" +
                          std::to_string(s.in) + ", classes=" + std::to_string(s.classes) + ")");
  }
  const Index B = Index(batch.size());
  detail::Mat Xb(B, s.in);
  for (Index i = 0; i < B; ++i) {
    Xb.row(i) = ds.X.row(batch[std::size_t(i)]);
  }

  VecX<double> grad = VecX<double>::Zero(params.size());

  if (s.kind == ModelKind::logreg) {
    const Index C = s.classes;
    Eigen::Map<const detail::Mat> W(params.data(), C, s.in);
    Eigen::Map<const VecX<double>> b(params.data() + C * s.in, C);
    detail::Mat logits = (Xb * W.transpose()).rowwise() + b.transpose();
    detail::Mat P;
    const double loss = detail::softmax_xent(logits, ds.y, batch.data(), B, P);
    for (Index i = 0; i < B; ++i) {
      P(i, ds.y[std::size_t(batch[std::size_t(i)])]) -= 1.0;
    }
    P /= double(B);
    Eigen::Map<detail::Mat> gW(grad.data(), C, s.in);
    Eigen::Map<VecX<double>> gb(grad.data() + C * s.in, C);
    gW = P.transpose() * Xb;
    gb = P.colwise().sum().transpose();
    return {loss, std::move(grad)};
  }

  const Index H = s.hidden;
  const Index C = s.classes;
  Eigen::Map<const detail::Mat> W1(params.data(), H, s.in);
  Eigen::Map<const VecX<double>> b1(params.data() + H * s.in, H);
  Eigen::Map<const detail::Mat> W2(params.data() + H * s.in + H, C, H);
  Eigen::Map<const VecX<double>> b2(params.data() + H * s.in + H + C * H, C);

  detail::Mat Z1 = (Xb * W1.transpose()).rowwise() + b1.transpose();
  detail::Mat A1 = (s.act == Activation::relu) ? Z1.cwiseMax(0.0).eval()
                                               : Z1.array().tanh().matrix().eval();
  detail::Mat logits = (A1 * W2.transpose()).rowwise() + b2.transpose();
  detail::Mat P;
  const double loss = detail::softmax_xent(logits, ds.y, batch.data(), B, P);
  for (Index i = 0; i < B; ++i) {
    P(i, ds.y[std::size_t(batch[std::size_t(i)])]) -= 1.0;
  }
  P /= double(B);

  detail::Mat dA1 = P * W2;
  detail::Mat dZ1 = (s.act == Activation::relu)
                        ? (dA1.array() * (Z1.array() > 0.0).cast<double>()).matrix().eval()
                        : (dA1.array() * (1.0 - A1.array().square())).matrix().eval();

  Eigen::Map<detail::Mat> gW1(grad.data(), H, s.in);
  Eigen::Map<VecX<double>> gb1(grad.data() + H * s.in, H);
  Eigen::Map<detail::Mat> gW2(grad.data() + H * s.in + H, C, H);
  Eigen::Map<VecX<double>> gb2(grad.data() + H * s.in + H + C * H, C);
  gW1 = dZ1.transpose() * Xb;
  gb1 = dZ1.colwise().sum().transpose();
  gW2 = P.transpose() * A1;
  gb2 = P.colwise().sum().transpose();
  return {loss, std::move(grad)};
}

// Loss and top-1 accuracy over the full dataset (used for per-epoch
// evaluation; synthetic sets carry no test split, so this evaluates the
// training set).
[[nodiscard]] inline std::pair<double, double> model_eval(const ModelSpec& s,
                                                          const VecX<double>& params,
                                                          const Dataset& ds) {
  const Index n = ds.n();
  detail::Mat logits;
  if (s.kind == ModelKind::logreg) {
    Eigen::Map<const detail::Mat> W(params.data(), s.classes, s.in);
    Eigen::Map<const VecX<double>> b(params.data() + s.classes * s.in, s.classes);
    logits = (ds.X * W.transpose()).rowwise() + b.transpose();
  } else {
    const Index H = s.hidden;
    Eigen::Map<const detail::Mat> W1(params.data(), H, s.in);
    Eigen::Map<const VecX<double>> b1(params.data() + H * s.in, H);
    Eigen::Map<const detail::Mat> W2(params.data() + H * s.in + H, s.classes, H);
    Eigen::Map<const VecX<double>> b2(params.data() + H * s.in + H + s.classes * H, s.classes);
    detail::Mat Z1 = (ds.X * W1.transpose()).rowwise() + b1.transpose();
    detail::Mat A1 = (s.act == Activation::relu) ? Z1.cwiseMax(0.0).eval()
                                                 : Z1.array().tanh().matrix().eval();
    logits = (A1 * W2.transpose()).rowwise() + b2.transpose();
  }
  detail::Mat P;
  const double loss = detail::softmax_xent(logits, ds.y, nullptr, n, P);
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (int(arg) == ds.y[std::size_t(i)]) ++correct;
  }
  return {loss, double(correct) / double(n)};
}

// Seeded Fisher–Yates permutation of [0, n), reshuffled per epoch via the
// (seed, 0, epoch) substream. Batch sharding: at iteration b, worker p takes
// the slice perm[(b*P + p)*B, ...+B).
[[nodiscard]] inline std::vector<Index> epoch_permutation(Index n, std::uint64_t seed,
                                                          std::uint64_t epoch) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng::substream(seed, 0, epoch);
  for (Index i = 0; i < n - 1; ++i) {
    const Index j = i + Index(rng.next_below(std::uint64_t(n - i)));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  return perm;
}

}  // namespace sparsecomm
