// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ew2v/model/context_encoder.hpp"
#include "ew2v/model/feature_encoder.hpp"
#include "ew2v/model/quantizer.hpp"

namespace ew2v::model {

struct ModelConfig {
  EncoderConfig encoder;
  ContextConfig context;
  QuantizerConfig quantizer;

  void validate() const {
    encoder.validate();
    context.validate();
    quantizer.validate();
    if (encoder.channels != context.dim) {
      throw ConfigError("model.context.dim", "must equal model.encoder.channels (" + std::to_string(encoder.channels) + ")");
    }
  }
};

template <typename T>
struct LinearHead {
  Parameter<T> weight, bias;
  Var<T> forward(Tape<T>& tape, const Var<T>& x) { return ops::linear(x, tape.param(weight), tape.param(bias)); }
};

// Shared feature encoder, context encoder, and either the pretraining
// quantizer or a fine-tuning output head (or, transiently, neither).
template <typename T>
class Wav2VecModel {
 public:
  Wav2VecModel() = default;

  Wav2VecModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const RngStream root(seed);
    encoder_ = FeatureEncoder<T>(cfg_.encoder, root.derive("init.encoder"));
    context_ = ContextEncoder<T>(cfg_.context, root.derive("init.context"));
    quantizer_.emplace(cfg_.quantizer, cfg_.encoder.channels, cfg_.context.dim, root.derive("init.quantizer"));
  }

  const ModelConfig& config() const { return cfg_; }
  FeatureEncoder<T>& encoder() { return encoder_; }
  ContextEncoder<T>& context() { return context_; }
  bool has_quantizer() const { return quantizer_.has_value(); }
  bool has_head() const { return head_.has_value(); }
  Quantizer<T>& quantizer() {
    if (!quantizer_) throw Error("model has no quantizer");
    return *quantizer_;
  }
  LinearHead<T>& head() {
    if (!head_) throw Error("model has no output head");
    return *head_;
  }

  void drop_quantizer() { quantizer_.reset(); }

  // Zero-initialized [vocab, dim] head, so initial posteriors are uniform.
  void add_head(std::size_t vocab) {
    head_ = LinearHead<T>{Parameter<T>("head.weight", Tensor<T>(Shape{vocab, cfg_.context.dim})),
                          Parameter<T>("head.bias", Tensor<T>(Shape{vocab}))};
  }

  ParamRefs<T> encoder_parameters() { return encoder_.parameters(); }

  // Everything except the quantizer and head.
  ParamRefs<T> body_parameters() {
    auto out = encoder_.parameters();
    for (auto* p : context_.parameters()) out.push_back(p);
    return out;
  }

  ParamRefs<T> parameters() {
    auto out = body_parameters();
    if (quantizer_)
      for (auto* p : quantizer_->parameters()) out.push_back(p);
    if (head_) {
      out.push_back(&head_->weight);
      out.push_back(&head_->bias);
    }
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->numel();
    return n;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto* p : parameters())
      if (p->name == name) return p;
    return nullptr;
  }

  void set_frozen(const ParamRefs<T>& params, bool frozen) {
    for (auto* p : params) p->frozen = frozen;
  }

 private:
  ModelConfig cfg_;
  FeatureEncoder<T> encoder_;
  ContextEncoder<T> context_;
  std::optional<Quantizer<T>> quantizer_;
  std::optional<LinearHead<T>> head_;
};

// Drops the quantizer and attaches a zero-initialized character head.
template <typename T>
Wav2VecModel<T> strip_and_head(Wav2VecModel<T> model, std::size_t vocab) {
  model.drop_quantizer();
  model.add_head(vocab);
  return model;
}

}  // namespace ew2v::model
