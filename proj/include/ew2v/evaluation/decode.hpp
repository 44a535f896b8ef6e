// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ew2v/numerics/tensor.hpp"
#include "ew2v/training/vocab.hpp"

namespace ew2v::evaluation {

// Per-frame argmax (first index on ties), then collapse repeats, then drop blanks.
inline std::vector<int> greedy_path(const std::vector<int>& frame_argmax, int blank = training::CharVocab::kBlank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : frame_argmax) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

template <typename T>
std::vector<int> frame_argmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "greedy_decode");
  std::vector<int> best(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto row = logits.row(t);
    for (T v : row)
      if (!std::isfinite(static_cast<double>(v))) throw NonFiniteError("greedy_decode: non-finite logit at frame " + std::to_string(t));
    best[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return best;
}

template <typename T>
std::string greedy_decode(const Tensor<T>& logits) {
  return training::CharVocab::decode(greedy_path(frame_argmax(logits)));
}

}  // namespace ew2v::evaluation
