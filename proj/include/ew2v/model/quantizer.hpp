// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ew2v/model/init.hpp"
#include "ew2v/numerics/ops.hpp"

namespace ew2v::model {

struct QuantizerConfig {
  std::size_t groups = 2;
  std::size_t entries = 8;
  std::size_t entry_dim = 8;

  void validate() const {
    if (groups < 1) throw ConfigError("quantizer.groups", "must be at least 1");
    if (entries < 2) throw ConfigError("quantizer.entries", "must be at least 2");
    if (entry_dim < 1) throw ConfigError("quantizer.entry_dim", "must be positive");
  }
};

// tau(step) = max(floor, start * decay^step).
struct GumbelSchedule {
  double start = 2.0;
  double floor = 0.5;
  double decay = 0.999995;

  double tau(std::uint64_t step) const {
    return std::max(floor, start * std::pow(decay, static_cast<double>(step)));
  }
};

// Batch codebook usage: p_bar and l_bar are [groups x entries], row-major.
struct CodeUsage {
  std::size_t groups = 0;
  std::size_t entries = 0;
  std::vector<double> p_bar;
  std::vector<double> l_bar;
};

enum class Assignment {
  // One-hot forward, gradient through the soft probabilities.
  hard_straight_through,
  // Soft probabilities forward and backward; the function whose gradient the
  // straight-through estimator uses, so finite differences apply to it.
  soft,
};

struct QuantizeOptions {
  Assignment assignment = Assignment::hard_straight_through;
  bool gumbel_noise = true;
};

template <typename T>
struct QuantizeOutput {
  Var<T> q;       // [N, target_dim]
  Var<T> p_bar;   // [1, groups * entries], differentiable usage probabilities
  CodeUsage usage;
  std::vector<std::size_t> selected;  // [N * groups] chosen entry per frame and group
};

// Product quantizer: features -> G x V logits -> one entry per group by
// Gumbel-softmax -> concatenated entries -> linear map to the target dim.
template <typename T>
class Quantizer {
 public:
  Quantizer() = default;

  Quantizer(QuantizerConfig cfg, std::size_t input_dim, std::size_t target_dim, RngStream rng)
      : cfg_(cfg), input_dim_(input_dim), target_dim_(target_dim) {
    cfg_.validate();
    const std::size_t GV = cfg_.groups * cfg_.entries, GE = cfg_.groups * cfg_.entry_dim;
    logit_w_ = Parameter<T>("quantizer.logit_proj.weight",
                            uniform_tensor<T>(Shape{GV, input_dim}, std::sqrt(3.0 / static_cast<double>(input_dim)), rng));
    logit_b_ = Parameter<T>("quantizer.logit_proj.bias", constant_tensor<T>(Shape{GV}, 0.0));
    codebooks_ = Parameter<T>("quantizer.codebooks",
                              uniform_tensor<T>(Shape{GV, cfg_.entry_dim}, 1.0 / std::sqrt(static_cast<double>(cfg_.entry_dim)), rng));
    out_w_ = Parameter<T>("quantizer.out_proj.weight",
                          uniform_tensor<T>(Shape{target_dim, GE}, 1.0 / std::sqrt(static_cast<double>(GE)), rng));
    out_b_ = Parameter<T>("quantizer.out_proj.bias", constant_tensor<T>(Shape{target_dim}, 0.0));
  }

  const QuantizerConfig& config() const { return cfg_; }
  std::size_t target_dim() const { return target_dim_; }

  Var<T> logits(Tape<T>& tape, const Var<T>& z) {
    Var<T> l = ops::linear(z, tape.param(logit_w_), tape.param(logit_b_));
    const std::size_t GV = cfg_.groups * cfg_.entries;
    for (std::size_t r = 0; r < l.shape()[0]; ++r) {
      for (std::size_t c = 0; c < GV; ++c) {
        if (!std::isfinite(l.value().at(r, c))) {
          throw NonFiniteError("quantize: non-finite logits at frame " + std::to_string(r));
        }
      }
    }
    return l;
  }

  // Gumbel noise is drawn frame-major, then group, then entry; the usage
  // noise (one vector per group) is drawn after all frames.
  QuantizeOutput<T> quantize(Tape<T>& tape, const Var<T>& z, double tau, RngStream& rng,
                             const QuantizeOptions& opt = {}) {
    if (!(tau > 0.0)) throw Error("quantize: tau must be positive");
    if (z.shape().size() != 2 || z.shape()[1] != input_dim_) {
      throw ShapeError("quantize: features " + shape_str(z.shape()) + " vs input dim " + std::to_string(input_dim_));
    }
    const std::size_t N = z.shape()[0], G = cfg_.groups, V = cfg_.entries;
    Var<T> l = logits(tape, z);
    Tensor<T> noise(Shape{N, G * V});
    if (opt.gumbel_noise)
      for (auto& v : noise.storage()) v = static_cast<T>(rng.gumbel());
    const T inv_tau = static_cast<T>(1.0 / tau);
    Var<T> y = ops::scale(ops::add(l, tape.constant(std::move(noise))), inv_tau);
    Var<T> cb = tape.param(codebooks_);
    QuantizeOutput<T> out;
    out.selected.assign(N * G, 0);
    std::vector<Var<T>> parts;
    for (std::size_t g = 0; g < G; ++g) {
      Var<T> yg = ops::slice_cols(y, g * V, V);
      Var<T> soft = ops::softmax_rows(yg);
      Var<T> assign = soft;
      Tensor<T> hard(Shape{N, V});
      for (std::size_t r = 0; r < N; ++r) {
        const auto row = yg.value().row(r);
        const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        hard.at(r, best) = T(1);
        out.selected[r * G + g] = best;
      }
      if (opt.assignment == Assignment::hard_straight_through) assign = ops::straight_through(std::move(hard), soft);
      parts.push_back(ops::matmul(assign, ops::slice_rows(cb, g * V, V)));
    }
    out.q = ops::linear(ops::concat_cols(parts), tape.param(out_w_), tape.param(out_b_));

    // p_bar_{g,v} = softmax_v((l_bar_{g,v} + n_v) / tau) over batch-averaged logits.
    Var<T> lbar = ops::mean_rows(l);
    Tensor<T> unoise(Shape{1, G * V});
    if (opt.gumbel_noise)
      for (auto& v : unoise.storage()) v = static_cast<T>(rng.gumbel());
    Var<T> ybar = ops::scale(ops::add(lbar, tape.constant(std::move(unoise))), inv_tau);
    std::vector<Var<T>> pg;
    for (std::size_t g = 0; g < G; ++g) pg.push_back(ops::softmax_rows(ops::slice_cols(ybar, g * V, V)));
    out.p_bar = ops::concat_cols(pg);
    out.usage.groups = G;
    out.usage.entries = V;
    out.usage.p_bar.assign(out.p_bar.value().data().begin(), out.p_bar.value().data().end());
    out.usage.l_bar.assign(lbar.value().data().begin(), lbar.value().data().end());
    return out;
  }

  ParamRefs<T> parameters() { return {&logit_w_, &logit_b_, &codebooks_, &out_w_, &out_b_}; }

 private:
  QuantizerConfig cfg_;
  std::size_t input_dim_ = 0, target_dim_ = 0;
  Parameter<T> logit_w_, logit_b_, codebooks_, out_w_, out_b_;
};

}  // namespace ew2v::model
