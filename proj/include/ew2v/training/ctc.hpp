// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ew2v/numerics/ops.hpp"

namespace ew2v::training {

namespace detail {

inline double log_add(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

// Minimum number of frames that can emit `target` (one per label plus one
// blank between each pair of equal neighbours).
inline std::size_t ctc_min_frames(const std::vector<int>& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

struct CtcResult {
  double loss = 0.0;            // -log P(target | logits)
  std::vector<double> grad;     // d loss / d logits, [T x V]
};

// Forward-backward in log space over the blank-interleaved target.
inline CtcResult ctc_forward_backward(const double* logits, std::size_t T, std::size_t V, const std::vector<int>& target,
                                      int blank = 0) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (int l : target) {
    if (l == blank) throw Error("ctc_loss: target contains the blank symbol");
    if (l < 0 || static_cast<std::size_t>(l) >= V) throw Error("ctc_loss: target symbol out of range");
  }
  if (T < ctc_min_frames(target)) {
    throw Error("ctc_loss: impossible alignment, " + std::to_string(T) + " frames for target needing " +
                std::to_string(ctc_min_frames(target)));
  }
  if (T == 0) throw Error("ctc_loss: no frames");
  std::vector<double> lp(T * V), prob(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = logits + t * V;
    const double mx = *std::max_element(row, row + V);
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) s += std::exp(row[k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < V; ++k) {
      lp[t * V + k] = row[k] - lse;
      prob[t * V + k] = std::exp(lp[t * V + k]);
    }
  }
  const std::size_t S = 2 * target.size() + 1;
  std::vector<int> ext(S, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp[blank];
  if (S > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = detail::log_add(a, alpha[(t - 1) * S + s - 1]);
      if (skip_ok(s)) a = detail::log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + lp[t * V + ext[s]];
    }
  }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = detail::log_add(log_p, alpha[(T - 1) * S + S - 2]);

  beta[(T - 1) * S + S - 1] = lp[(T - 1) * V + ext[S - 1]];
  if (S > 1) beta[(T - 1) * S + S - 2] = lp[(T - 1) * V + ext[S - 2]];
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = detail::log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && skip_ok(s + 2)) b = detail::log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + lp[t * V + ext[s]];
    }
  }

  CtcResult res;
  res.loss = -log_p;
  res.grad.assign(T * V, 0.0);
  std::vector<double> occ(V);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(occ.begin(), occ.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab == kNegInf) continue;
      occ[ext[s]] = detail::log_add(occ[ext[s]], ab - lp[t * V + ext[s]]);
    }
    for (std::size_t k = 0; k < V; ++k) {
      const double post = occ[k] == kNegInf ? 0.0 : std::exp(occ[k] - log_p);
      res.grad[t * V + k] = prob[t * V + k] - post;
    }
  }
  return res;
}

// Negative log-likelihood of `target` under per-frame logits [T, V].
template <typename T>
Var<T> ctc_loss(const Var<T>& logits, const std::vector<int>& target, int blank = 0) {
  require_rank(logits.shape(), 2, "ctc_loss");
  const std::size_t Tn = logits.shape()[0], V = logits.shape()[1];
  std::vector<double> x(logits.value().data().begin(), logits.value().data().end());
  CtcResult r = ctc_forward_backward(x.data(), Tn, V, target, blank);
  if (!std::isfinite(r.loss)) throw NonFiniteError("ctc_loss: non-finite loss");
  const auto il = logits.id();
  return logits.tape().record(
      Tensor<T>::scalar(static_cast<T>(r.loss)),
      [=, grad = std::move(r.grad)](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(il);
        for (std::size_t i = 0; i < grad.size(); ++i) d[i] += g[0] * static_cast<T>(grad[i]);
      },
      logits);
}

}  // namespace ew2v::training
