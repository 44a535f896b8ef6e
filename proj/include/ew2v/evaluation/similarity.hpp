// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ew2v/evaluation/grid.hpp"
#include "ew2v/training/finetune.hpp"

namespace ew2v::evaluation {

// aᵀb / (‖a‖‖b‖) in double; false when either vector has zero norm.
template <typename T>
bool cosine(std::span<const T> a, std::span<const T> b, double& out) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    ab += x * y;
    aa += x * x;
    bb += y * y;
  }
  if (aa == 0.0 || bb == 0.0) return false;
  out = ab / (std::sqrt(aa) * std::sqrt(bb));
  return true;
}

struct FrameSimilarity {
  double sum = 0.0;
  std::size_t n_frames = 0;
  std::size_t zero_norm_frames = 0;

  double mean() const { return n_frames ? sum / static_cast<double>(n_frames) : 0.0; }
  FrameSimilarity& operator+=(const FrameSimilarity& o) {
    sum += o.sum;
    n_frames += o.n_frames;
    zero_norm_frames += o.zero_norm_frames;
    return *this;
  }
};

// Frame-wise cosine between two [frames, dim] representations; zero-norm
// frames are excluded and counted.
template <typename T>
FrameSimilarity frame_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "frame_similarity");
  FrameSimilarity s;
  for (std::size_t t = 0; t < a.rows(); ++t) {
    double c = 0.0;
    if (cosine<T>(a.row(t), b.row(t), c)) {
      s.sum += c;
      ++s.n_frames;
    } else {
      ++s.zero_norm_frames;
    }
  }
  return s;
}

struct SimilarityRow {
  std::string model_id;
  std::string noise_type;
  double snr_db = 0.0;
  std::size_t n_frames = 0;
  std::size_t zero_norm_frames = 0;
  double mean_cos = 0.0;
};

// Per grid cell, the frame mean of cos(C_a(noisy), C_ref(clean twin)).
inline std::vector<SimilarityRow> representation_similarity(const std::string& model_id, model::Wav2VecModel<float>& a,
                                                            model::Wav2VecModel<float>& ref, const TestGrid& grid) {
  if (a.config().encoder.hop() != ref.config().encoder.hop()) {
    throw Error("similarity: models have different frame rates");
  }
  std::vector<Tensor<float>> ref_ctx;
  for (const auto& u : grid.clean) ref_ctx.push_back(training::infer_context(ref, u.wave.samples));
  std::vector<SimilarityRow> rows;
  for (const auto& cell : grid.cells) {
    FrameSimilarity acc;
    for (std::size_t i = 0; i < cell.pairs.size(); ++i) {
      acc += frame_similarity(training::infer_context(a, cell.pairs[i].noisy.samples), ref_ctx[i]);
    }
    rows.push_back({model_id, cell.noise_type, cell.snr_db, acc.n_frames, acc.zero_norm_frames, acc.mean()});
  }
  return rows;
}

}  // namespace ew2v::evaluation
