// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ew2v/numerics/error.hpp"

namespace ew2v::evaluation {

// Trims, then splits on single spaces; repeated spaces yield no empty words.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t n_ref = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const {
    if (n_ref == 0) throw Error("wer: empty reference");
    return static_cast<double>(errors()) / static_cast<double>(n_ref);
  }
  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    n_ref += o.n_ref;
    return *this;
  }
};

// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
// prefers substitution, then deletion, then insertion.
inline EditCounts align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t R = ref.size(), H = hyp.size();
  std::vector<std::size_t> d((R + 1) * (H + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (H + 1) + j]; };
  for (std::size_t i = 0; i <= R; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= H; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts e;
  e.n_ref = R;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++e.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

struct WerResult {
  EditCounts counts;
  double wer = 0.0;
};

inline WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw Error("wer: empty reference");
  WerResult r{align_words(ref, hyp), 0.0};
  r.wer = r.counts.wer();
  return r;
}

inline WerResult wer(const std::string& ref, const std::string& hyp) { return wer(split_words(ref), split_words(hyp)); }

}  // namespace ew2v::evaluation
