// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ew2v/model/init.hpp"
#include "ew2v/numerics/ops.hpp"

namespace ew2v::model {

struct MaskConfig {
  double p = 0.065;
  std::size_t span = 10;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("mask.p", "must lie in (0, 1)");
    if (span < 1) throw ConfigError("mask.span", "must be at least 1");
  }
};

struct MaskResult {
  std::vector<bool> mask;
  std::vector<std::size_t> indices;
  // Set when every resample came back empty and a span was forced.
  bool forced = false;
};

inline constexpr int kMaskResamples = 16;

// Each frame starts a span with probability p; spans cover [t, t + span)
// truncated at the end. An empty draw is resampled up to 16 times, then one
// span at a uniform start is forced.
inline MaskResult sample_mask(std::size_t frames, const MaskConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (frames == 0) throw Error("sample_mask: need at least one frame");
  MaskResult res;
  res.mask.assign(frames, false);
  bool any = false;
  for (int attempt = 0; attempt < kMaskResamples && !any; ++attempt) {
    std::fill(res.mask.begin(), res.mask.end(), false);
    for (std::size_t t = 0; t < frames; ++t) {
      if (rng.bernoulli(cfg.p)) {
        any = true;
        for (std::size_t u = t; u < std::min(frames, t + cfg.span); ++u) res.mask[u] = true;
      }
    }
  }
  if (!any) {
    res.forced = true;
    const std::size_t start = rng.index(frames);
    for (std::size_t u = start; u < std::min(frames, start + cfg.span); ++u) res.mask[u] = true;
  }
  for (std::size_t t = 0; t < frames; ++t)
    if (res.mask[t]) res.indices.push_back(t);
  return res;
}

struct ContextConfig {
  std::size_t layers = 2;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_inner = 64;
  std::size_t pos_kernel = 9;
  std::size_t pos_groups = 4;
  // Test-only switch; without it the block stack is permutation-equivariant.
  bool positional = true;

  void validate() const {
    if (layers < 1) throw ConfigError("context.layers", "must be at least 1");
    if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("context.heads", "context.dim must be divisible by context.heads");
    if (ffn_inner < 1) throw ConfigError("context.ffn_inner", "must be positive");
    if (pos_kernel % 2 == 0) throw ConfigError("context.pos_kernel", "must be odd");
    if (pos_groups < 1 || dim % pos_groups != 0) throw ConfigError("context.pos_groups", "must divide context.dim");
  }
};

// Span masking plus a pre-norm transformer with a grouped-convolution
// relative positional embedding added before the first block.
template <typename T>
class ContextEncoder {
 public:
  ContextEncoder() = default;

  ContextEncoder(ContextConfig cfg, RngStream rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t D = cfg_.dim, F = cfg_.ffn_inner;
    mask_embedding_ = Parameter<T>("context.mask_embedding", uniform_tensor<T>(Shape{D}, 1.0, rng));
    for (auto& v : mask_embedding_.value.storage()) v = (v + T(1)) / T(2);  // U[0, 1)
    const std::size_t dg = D / cfg_.pos_groups;
    const double pos_bound = std::sqrt(3.0) * std::sqrt(4.0 / static_cast<double>(cfg_.pos_kernel * D));
    pos_weight_ = Parameter<T>("context.pos_conv.weight", uniform_tensor<T>(Shape{D, cfg_.pos_kernel, dg}, pos_bound, rng));
    pos_bias_ = Parameter<T>("context.pos_conv.bias", constant_tensor<T>(Shape{D}, 0.0));
    auto lin = [&](const std::string& name, std::size_t out, std::size_t in) {
      const double b = 1.0 / std::sqrt(static_cast<double>(in));
      return std::pair{Parameter<T>(name + ".weight", uniform_tensor<T>(Shape{out, in}, b, rng)),
                       Parameter<T>(name + ".bias", constant_tensor<T>(Shape{out}, 0.0))};
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string b = "context.layers." + std::to_string(l);
      Block blk;
      blk.ln1_g = Parameter<T>(b + ".attn_norm.gain", constant_tensor<T>(Shape{D}, 1.0));
      blk.ln1_b = Parameter<T>(b + ".attn_norm.bias", constant_tensor<T>(Shape{D}, 0.0));
      std::tie(blk.wq, blk.bq) = lin(b + ".attn.q", D, D);
      std::tie(blk.wk, blk.bk) = lin(b + ".attn.k", D, D);
      std::tie(blk.wv, blk.bv) = lin(b + ".attn.v", D, D);
      std::tie(blk.wo, blk.bo) = lin(b + ".attn.out", D, D);
      blk.ln2_g = Parameter<T>(b + ".ffn_norm.gain", constant_tensor<T>(Shape{D}, 1.0));
      blk.ln2_b = Parameter<T>(b + ".ffn_norm.bias", constant_tensor<T>(Shape{D}, 0.0));
      std::tie(blk.w1, blk.b1) = lin(b + ".ffn.fc1", F, D);
      std::tie(blk.w2, blk.b2) = lin(b + ".ffn.fc2", D, F);
      blocks_.push_back(std::move(blk));
    }
    final_g_ = Parameter<T>("context.final_norm.gain", constant_tensor<T>(Shape{D}, 1.0));
    final_b_ = Parameter<T>("context.final_norm.bias", constant_tensor<T>(Shape{D}, 0.0));
  }

  const ContextConfig& config() const { return cfg_; }
  std::size_t dim() const { return cfg_.dim; }

  // Masked rows are replaced by the learnable embedding; others pass through.
  Var<T> apply_mask(Tape<T>& tape, const Var<T>& z, const std::vector<bool>& mask) {
    return ops::replace_rows(z, mask, tape.param(mask_embedding_));
  }

  Var<T> contextualize(Tape<T>& tape, const Var<T>& z) {
    if (z.shape().size() != 2 || z.shape()[1] != cfg_.dim) {
      throw ShapeError("contextualize: input " + shape_str(z.shape()) + " vs context dim " + std::to_string(cfg_.dim));
    }
    if (!z.value().all_finite()) throw NonFiniteError("contextualize: non-finite input features");
    attention.clear();
    Var<T> x = z;
    if (cfg_.positional) {
      Var<T> pos = ops::grouped_conv1d_same(z, tape.param(pos_weight_), tape.param(pos_bias_), cfg_.pos_groups);
      x = ops::add(x, ops::gelu(pos));
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      x = block_forward(tape, blocks_[l], x);
      if (!x.value().all_finite()) {
        throw NonFiniteError("contextualize: non-finite activation after layer " + std::to_string(l));
      }
    }
    return ops::layer_norm(x, tape.param(final_g_), tape.param(final_b_));
  }

  // Attention probabilities of the most recent contextualize() call, one
  // [T, T] matrix per (layer, head); kept only when record_attention is set.
  bool record_attention = false;
  std::vector<Tensor<T>> attention;

  ParamRefs<T> parameters() {
    ParamRefs<T> out{&mask_embedding_};
    if (cfg_.positional) {
      out.push_back(&pos_weight_);
      out.push_back(&pos_bias_);
    }
    for (auto& b : blocks_) {
      for (auto* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln2_g, &b.ln2_b,
                      &b.w1, &b.b1, &b.w2, &b.b2})
        out.push_back(p);
    }
    out.push_back(&final_g_);
    out.push_back(&final_b_);
    return out;
  }

 private:
  struct Block {
    Parameter<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Var<T> block_forward(Tape<T>& tape, Block& b, const Var<T>& x) {
    const std::size_t H = cfg_.heads, dh = cfg_.dim / H;
    Var<T> h = ops::layer_norm(x, tape.param(b.ln1_g), tape.param(b.ln1_b));
    Var<T> q = ops::linear(h, tape.param(b.wq), tape.param(b.bq));
    Var<T> k = ops::linear(h, tape.param(b.wk), tape.param(b.bk));
    Var<T> v = ops::linear(h, tape.param(b.wv), tape.param(b.bv));
    std::vector<Var<T>> heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (std::size_t i = 0; i < H; ++i) {
      Var<T> qi = ops::slice_cols(q, i * dh, dh);
      Var<T> ki = ops::slice_cols(k, i * dh, dh);
      Var<T> vi = ops::slice_cols(v, i * dh, dh);
      Var<T> p = ops::softmax_rows(ops::scale(ops::matmul_nt(qi, ki), scale));
      if (record_attention) attention.push_back(p.value());
      heads.push_back(ops::matmul(p, vi));
    }
    Var<T> a = ops::linear(ops::concat_cols(heads), tape.param(b.wo), tape.param(b.bo));
    Var<T> x1 = ops::add(x, a);
    Var<T> h2 = ops::layer_norm(x1, tape.param(b.ln2_g), tape.param(b.ln2_b));
    Var<T> f = ops::linear(ops::gelu(ops::linear(h2, tape.param(b.w1), tape.param(b.b1))), tape.param(b.w2),
                           tape.param(b.b2));
    return ops::add(x1, f);
  }

  ContextConfig cfg_;
  Parameter<T> mask_embedding_, pos_weight_, pos_bias_, final_g_, final_b_;
  std::vector<Block> blocks_;
};

}  // namespace ew2v::model
