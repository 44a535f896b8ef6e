// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ew2v/numerics/tape.hpp"

namespace ew2v::training {

struct LrSchedule {
  double peak = 5e-4;
  double warmup_fraction = 0.08;
  std::uint64_t total_steps = 1;

  std::uint64_t warmup_steps() const {
    return static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  }

  // Linear 0 -> peak over the warmup steps, then linear peak -> 0 at total_steps.
  double at(std::uint64_t step) const {
    const double w = static_cast<double>(warmup_steps());
    const double s = static_cast<double>(step);
    const double n = static_cast<double>(total_steps);
    if (step >= total_steps) return 0.0;
    if (s <= w) return w > 0 ? peak * (s / w) : peak;
    return peak * ((n - s) / (n - w));
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
};

// Adam with bias correction; frozen parameters are skipped entirely.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }

  std::uint64_t steps() const { return t_; }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      if (p.frozen) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.numel(); ++k) {
        const double g = static_cast<double>(p.grad[k]);
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        const double mh = m[k] / c1;
        const double vh = v[k] / c2;
        p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
  double s = 0.0;
  for (const auto* p : params)
    for (T g : p->grad.data()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

// Rescales all gradients so their global norm is at most max_norm; returns
// the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  const double n = global_grad_norm(params);
  if (n > max_norm && n > 0.0) {
    const T s = static_cast<T>(max_norm / n);
    for (auto* p : params)
      for (auto& g : p->grad.storage()) g *= s;
  }
  return n;
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace ew2v::training
