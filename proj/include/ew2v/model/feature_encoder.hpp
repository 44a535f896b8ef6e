// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ew2v/model/init.hpp"
#include "ew2v/numerics/ops.hpp"

namespace ew2v::model {

struct EncoderConfig {
  std::size_t channels = 32;
  std::vector<std::size_t> strides{5, 2, 2, 2, 2, 2, 2};
  std::vector<std::size_t> kernels{10, 3, 3, 3, 3, 2, 2};

  void validate() const {
    if (strides.size() != 7) throw ConfigError("encoder.strides", "need exactly 7 layers");
    if (kernels.size() != 7) throw ConfigError("encoder.kernels", "need exactly 7 layers");
    if (channels < 4) throw ConfigError("encoder.channels", "must be at least 4");
    for (std::size_t i = 0; i < 7; ++i) {
      if (strides[i] == 0 || kernels[i] == 0) throw ConfigError("encoder", "strides and kernels must be positive");
    }
  }

  // Samples between consecutive output frames (product of strides).
  std::size_t hop() const {
    std::size_t h = 1;
    for (auto s : strides) h *= s;
    return h;
  }

  // Input samples seen by one output frame.
  std::size_t receptive_field() const {
    std::size_t rf = 1, jump = 1;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      rf += (kernels[i] - 1) * jump;
      jump *= strides[i];
    }
    return rf;
  }

  // Valid-convolution frame count composed over all layers; 0 when the input
  // is shorter than one receptive field.
  std::size_t num_frames(std::size_t n_samples) const {
    std::size_t n = n_samples;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      if (n < kernels[i]) return 0;
      n = (n - kernels[i]) / strides[i] + 1;
    }
    return n;
  }
};

// Seven valid 1-D convolutions, each followed by per-frame layer norm and
// GELU, mapping a waveform to a [frames, channels] feature sequence. The same
// instance encodes the clean and the noisy stream.
template <typename T>
class FeatureEncoder {
 public:
  FeatureEncoder() = default;

  FeatureEncoder(EncoderConfig cfg, RngStream rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::size_t cin = 1;
    for (std::size_t l = 0; l < cfg_.kernels.size(); ++l) {
      const std::size_t k = cfg_.kernels[l];
      const double bound = std::sqrt(6.0 / static_cast<double>(k * cin));
      const std::string base = "encoder.conv" + std::to_string(l);
      conv_.emplace_back(base + ".weight", uniform_tensor<T>(Shape{cfg_.channels, k, cin}, bound, rng));
      gain_.emplace_back(base + ".norm.gain", constant_tensor<T>(Shape{cfg_.channels}, 1.0));
      bias_.emplace_back(base + ".norm.bias", constant_tensor<T>(Shape{cfg_.channels}, 0.0));
      cin = cfg_.channels;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  std::size_t dim() const { return cfg_.channels; }

  // `layers` < 7 truncates the stack (used to check gradients of a prefix).
  Var<T> forward(Tape<T>& tape, std::span<const float> wave, std::size_t layers = 7) {
    if (wave.size() < cfg_.receptive_field() && layers == cfg_.kernels.size()) {
      throw Error("encode: input has " + std::to_string(wave.size()) + " samples, need at least " +
                  std::to_string(cfg_.receptive_field()));
    }
    Tensor<T> x(Shape{wave.size(), 1});
    for (std::size_t i = 0; i < wave.size(); ++i) x[i] = static_cast<T>(wave[i]);
    Var<T> h = tape.constant(std::move(x));
    for (std::size_t l = 0; l < layers; ++l) {
      h = ops::conv1d(h, tape.param(conv_[l]), cfg_.strides[l]);
      h = ops::layer_norm(h, tape.param(gain_[l]), tape.param(bias_[l]));
      h = ops::gelu(h);
    }
    return h;
  }

  Var<T> forward(Tape<T>& tape, const std::vector<float>& wave) {
    return forward(tape, std::span<const float>(wave.data(), wave.size()));
  }

  ParamRefs<T> parameters() {
    ParamRefs<T> out;
    for (std::size_t l = 0; l < conv_.size(); ++l) {
      out.push_back(&conv_[l]);
      out.push_back(&gain_[l]);
      out.push_back(&bias_[l]);
    }
    return out;
  }

 private:
  EncoderConfig cfg_;
  std::vector<Parameter<T>> conv_, gain_, bias_;
};

}  // namespace ew2v::model
