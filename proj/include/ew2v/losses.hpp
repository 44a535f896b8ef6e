// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ew2v/model/quantizer.hpp"
#include "ew2v/numerics/ops.hpp"
#include "ew2v/numerics/rng.hpp"

namespace ew2v::losses {

struct LossWeights {
  double alpha = 0.1;   // diversity
  double beta = 10.0;   // feature penalty
  double gamma = 1.0;   // consistency
  double kappa = 0.1;   // cosine temperature
  std::size_t distractors = 10;

  void validate() const {
    if (!(kappa > 0.0)) throw ConfigError("loss.kappa", "must be positive");
    if (distractors < 1) throw ConfigError("loss.distractors", "must be at least 1");
    for (double w : {alpha, beta, gamma})
      if (!std::isfinite(w)) throw ConfigError("loss", "weights must be finite");
  }
};

struct LossBreakdown {
  double l_m = 0, l_d = 0, l_f = 0, l_c = 0, total = 0;
  std::size_t n_masked = 0;
};

// Masked frames of one utterance inside a batch-concatenated sequence.
struct UtteranceMask {
  std::size_t offset = 0;  // first row of the utterance in the batch
  std::size_t frames = 0;
  std::vector<std::size_t> masked;  // local frame indices
};

// Candidate table for the contrastive term: row i lists the positive (column
// 0) and K distractors for the i-th masked frame, as batch row indices.
// Distractors come from the other masked frames of the same utterance,
// without replacement when at least K exist and with replacement otherwise.
// If a frame is the only masked one, the other frames of its utterance are
// used instead.
struct CandidateTable {
  std::vector<std::size_t> masked_rows;
  std::vector<std::size_t> index;
  std::size_t width = 0;
};

inline CandidateTable sample_distractors(const std::vector<UtteranceMask>& utts, std::size_t K, RngStream& rng) {
  if (K < 1) throw Error("sample_distractors: K must be at least 1");
  CandidateTable tab;
  tab.width = K + 1;
  for (const auto& u : utts) {
    for (std::size_t t : u.masked) {
      std::vector<std::size_t> pool;
      for (std::size_t o : u.masked)
        if (o != t) pool.push_back(o);
      if (pool.empty()) {
        for (std::size_t o = 0; o < u.frames; ++o)
          if (o != t) pool.push_back(o);
      }
      if (pool.empty()) throw Error("contrastive loss: utterance with a single frame has no distractors");
      tab.masked_rows.push_back(u.offset + t);
      tab.index.push_back(u.offset + t);
      if (pool.size() >= K) {
        for (std::size_t j = 0; j < K; ++j) {
          const std::size_t pick = j + rng.index(pool.size() - j);
          std::swap(pool[j], pool[pick]);
          tab.index.push_back(u.offset + pool[j]);
        }
      } else {
        for (std::size_t j = 0; j < K; ++j) tab.index.push_back(u.offset + pool[rng.index(pool.size())]);
      }
    }
  }
  if (tab.masked_rows.empty()) throw Error("contrastive loss: no masked frames");
  return tab;
}

// Mean over masked frames of -log softmax(cos(c_t, q~) / kappa) at the positive.
template <typename T>
Var<T> contrastive_loss(const Var<T>& context, const Var<T>& targets, const CandidateTable& tab, double kappa) {
  if (context.shape().size() != 2 || targets.shape().size() != 2 || context.shape()[1] != targets.shape()[1]) {
    throw ShapeError("contrastive_loss: context " + shape_str(context.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  Var<T> c = ops::normalize_rows(ops::gather_rows(context, tab.masked_rows), "contrastive_loss(context)");
  Var<T> q = ops::normalize_rows(targets, "contrastive_loss(targets)");
  Var<T> sims = ops::gathered_row_dots(c, q, tab.index, tab.width);
  Var<T> logits = ops::scale(sims, static_cast<T>(1.0 / kappa));
  return ops::cross_entropy_rows(logits, std::vector<std::size_t>(tab.masked_rows.size(), 0));
}

// Closed form of the contrastive term from precomputed similarities
// (column 0 positive), used to check the op.
inline double contrastive_from_similarities(const std::vector<std::vector<double>>& sims, double kappa) {
  double loss = 0.0;
  for (const auto& row : sims) {
    double mx = row[0] / kappa;
    for (double s : row) mx = std::max(mx, s / kappa);
    double z = 0.0;
    for (double s : row) z += std::exp(s / kappa - mx);
    loss += -(row[0] / kappa - mx - std::log(z));
  }
  return loss / static_cast<double>(sims.size());
}

// (1/(G V)) * sum_g sum_v p log p, with 0 log 0 := 0.
inline double diversity_loss(const model::CodeUsage& usage) {
  const std::size_t GV = usage.groups * usage.entries;
  if (usage.p_bar.size() != GV || GV == 0) throw ShapeError("diversity_loss: usage size mismatch");
  double s = 0.0;
  for (double p : usage.p_bar) {
    if (p < 0.0) throw Error("diversity_loss: negative probability");
    if (p > 0.0) s += p * std::log(p);
  }
  return s / static_cast<double>(GV);
}

template <typename T>
Var<T> diversity_loss(const Var<T>& p_bar, std::size_t groups, std::size_t entries) {
  return ops::scale(ops::plogp_sum(p_bar), static_cast<T>(1.0 / static_cast<double>(groups * entries)));
}

// Mean square over both streams, all frames and dimensions.
template <typename T>
Var<T> feature_penalty(const Var<T>& z_noisy, const Var<T>& z_clean) {
  return ops::mean_square(std::vector<Var<T>>{z_noisy, z_clean});
}

// Mean over frames of ||z_noisy_t - z_clean_t||_2.
template <typename T>
Var<T> consistency_loss(const Var<T>& z_noisy, const Var<T>& z_clean) {
  require_same_shape(z_noisy.shape(), z_clean.shape(), "consistency_loss");
  return ops::mean(ops::row_norms(ops::sub(z_noisy, z_clean)));
}

struct LossTerms {
  double l_m = 0, l_d = 0, l_f = 0, l_c = 0;
};

// L = L_m + alpha L_d + beta L_f + gamma L_c.
inline LossBreakdown total_loss(const LossTerms& parts, const LossWeights& w, std::size_t n_masked = 0) {
  const std::pair<const char*, double> named[] = {{"l_m", parts.l_m}, {"l_d", parts.l_d}, {"l_f", parts.l_f}, {"l_c", parts.l_c}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string("total_loss: non-finite term ") + name);
  }
  LossBreakdown b{parts.l_m, parts.l_d, parts.l_f, parts.l_c, 0.0, n_masked};
  b.total = parts.l_m + w.alpha * parts.l_d + w.beta * parts.l_f + w.gamma * parts.l_c;
  return b;
}

template <typename T>
struct LossVars {
  Var<T> l_m, l_d, l_f, l_c, total;
};

template <typename T>
LossVars<T> total_loss(const Var<T>& l_m, const Var<T>& l_d, const Var<T>& l_f, const Var<T>& l_c, const LossWeights& w) {
  for (const auto& [name, v] : {std::pair{"l_m", l_m}, std::pair{"l_d", l_d}, std::pair{"l_f", l_f}, std::pair{"l_c", l_c}}) {
    if (!std::isfinite(static_cast<double>(v.value().item()))) {
      throw NonFiniteError(std::string("total_loss: non-finite term ") + name);
    }
  }
  Var<T> total = ops::weighted_sum(std::vector<Var<T>>{l_m, l_d, l_f, l_c},
                                   std::vector<T>{T(1), static_cast<T>(w.alpha), static_cast<T>(w.beta), static_cast<T>(w.gamma)});
  return {l_m, l_d, l_f, l_c, total};
}

}  // namespace ew2v::losses
