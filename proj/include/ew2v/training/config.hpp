// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "json.hpp"

#include "ew2v/audio/corpus.hpp"
#include "ew2v/audio/mixing.hpp"
#include "ew2v/losses.hpp"
#include "ew2v/model/wav2vec.hpp"
#include "ew2v/training/optim.hpp"

namespace ew2v::training {

using nlohmann::json;

struct DataConfig {
  audio::ToyCorpusConfig corpus;
  std::vector<double> snr_set{0, 5, 10, 15, 20, 25};
  audio::OffsetPolicy offset_policy = audio::OffsetPolicy::random_start;
};

// Which half of each pair a training loop reads as its noisy input.
enum class TrainData { noisy, clean };

struct PretrainConfig {
  TrainData data = TrainData::noisy;
  std::uint64_t total_steps = 200;
  std::size_t batch_size = 8;
  double lr_peak = 5e-4;
  double warmup_fraction = 0.08;
  AdamConfig adam;
  double clip_norm = 25.0;
  losses::LossWeights loss;
  model::MaskConfig mask;
  model::GumbelSchedule gumbel;
  std::uint64_t checkpoint_every = 0;

  LrSchedule schedule() const { return {lr_peak, warmup_fraction, total_steps}; }
};

struct FinetuneConfig {
  std::uint64_t total_steps = 500;
  std::size_t batch_size = 8;
  double lr_peak = 5e-4;
  double warmup_fraction = 0.08;
  AdamConfig adam;
  double clip_norm = 25.0;
  double freeze_fraction = 0.1;
  TrainData data = TrainData::noisy;
  std::uint64_t checkpoint_every = 0;

  LrSchedule schedule() const { return {lr_peak, warmup_fraction, total_steps}; }
  std::uint64_t frozen_steps() const {
    return static_cast<std::uint64_t>(freeze_fraction * static_cast<double>(total_steps));
  }
};

struct EvalConfig {
  std::vector<double> snr_set{0, 5, 10, 15, 20};
  bool plots = true;
};

struct RunConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  model::ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalConfig eval;
};

inline std::string offset_policy_name(audio::OffsetPolicy p) {
  return p == audio::OffsetPolicy::random_start ? "random_start" : "fixed_start";
}

inline std::string train_data_name(TrainData d) { return d == TrainData::noisy ? "noisy" : "clean"; }

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const AdamConfig& a) { return {{"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}}; }

inline json to_json(const model::ModelConfig& m) {
  return {
      {"encoder", {{"channels", m.encoder.channels}, {"strides", m.encoder.strides}, {"kernels", m.encoder.kernels}}},
      {"context",
       {{"layers", m.context.layers},
        {"dim", m.context.dim},
        {"heads", m.context.heads},
        {"ffn_inner", m.context.ffn_inner},
        {"pos_kernel", m.context.pos_kernel},
        {"pos_groups", m.context.pos_groups}}},
      {"quantizer",
       {{"groups", m.quantizer.groups}, {"entries", m.quantizer.entries}, {"entry_dim", m.quantizer.entry_dim}}},
  };
}

inline json to_json(const RunConfig& c) {
  const auto& k = c.data.corpus;
  const auto& p = c.pretrain;
  const auto& f = c.finetune;
  return {
      {"seed", c.seed},
      {"data",
       {{"n_utterances", k.n_utterances},
        {"n_test_utterances", k.n_test_utterances},
        {"min_chars", k.min_chars},
        {"max_chars", k.max_chars},
        {"alphabet_size", k.alphabet_size},
        {"tone_base_hz", k.tone_base_hz},
        {"char_duration_ms", k.char_duration_ms},
        {"space_probability", k.space_probability},
        {"noise_types", k.noise_types},
        {"noise_streams_per_type", k.noise_streams_per_type},
        {"test_noise_streams_per_type", k.test_noise_streams_per_type},
        {"noise_duration_ms", k.noise_duration_ms},
        {"dither", k.dither},
        {"corpus_seed", k.seed},
        {"snr_set", c.data.snr_set},
        {"offset_policy", offset_policy_name(c.data.offset_policy)}}},
      {"model", to_json(c.model)},
      {"pretrain",
       {{"data", train_data_name(p.data)},
        {"total_steps", p.total_steps},
        {"batch_size", p.batch_size},
        {"lr_peak", p.lr_peak},
        {"warmup_fraction", p.warmup_fraction},
        {"adam", to_json(p.adam)},
        {"clip_norm", p.clip_norm},
        {"loss",
         {{"alpha", p.loss.alpha},
          {"beta", p.loss.beta},
          {"gamma", p.loss.gamma},
          {"kappa", p.loss.kappa},
          {"distractors", p.loss.distractors}}},
        {"mask", {{"p", p.mask.p}, {"span", p.mask.span}}},
        {"gumbel", {{"start", p.gumbel.start}, {"floor", p.gumbel.floor}, {"decay", p.gumbel.decay}}},
        {"checkpoint_every", p.checkpoint_every}}},
      {"finetune",
       {{"total_steps", f.total_steps},
        {"batch_size", f.batch_size},
        {"lr_peak", f.lr_peak},
        {"warmup_fraction", f.warmup_fraction},
        {"adam", to_json(f.adam)},
        {"clip_norm", f.clip_norm},
        {"freeze_fraction", f.freeze_fraction},
        {"data", train_data_name(f.data)},
        {"checkpoint_every", f.checkpoint_every}}},
      {"eval", {{"snr_set", c.eval.snr_set}, {"plots", c.eval.plots}}},
  };
}

// ---------------------------------------------------------------------------
// Parsing; every error names the dotted path of the offending field.

namespace detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

inline void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(join(path, it.key()), "unknown field");
  }
}

inline void read(const json& v, const std::string& path, double& out) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  out = v.get<double>();
}

inline void read(const json& v, const std::string& path, bool& out) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  out = v.get<bool>();
}

inline void read(const json& v, const std::string& path, std::string& out) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  out = v.get<std::string>();
}

template <typename U>
  requires std::is_unsigned_v<U>
void read(const json& v, const std::string& path, U& out) {
  if (v.is_number_unsigned()) {
    out = v.get<U>();
  } else if (v.is_number_integer()) {
    throw ConfigError(path, "must be non-negative");
  } else {
    throw ConfigError(path, "expected a non-negative integer");
  }
}

template <typename E>
void read(const json& v, const std::string& path, std::vector<E>& out) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    E e{};
    read(v[i], path + "[" + std::to_string(i) + "]", e);
    out.push_back(e);
  }
}

template <typename V>
void field(const json& obj, const std::string& path, const char* key, V& out) {
  if (auto it = obj.find(key); it != obj.end()) read(*it, join(path, key), out);
}

// Runs a struct's own validate() and re-roots its field path under `prefix`.
template <typename F>
void validated(const std::string& prefix, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError(join(prefix, e.field()), msg.substr(e.field().size() + 2));
  }
}

inline void read_train_data(const json& j, const std::string& path, TrainData& out) {
  std::string data = train_data_name(out);
  field(j, path, "data", data);
  if (data == "noisy") {
    out = TrainData::noisy;
  } else if (data == "clean") {
    out = TrainData::clean;
  } else {
    throw ConfigError(path + ".data", "expected noisy or clean, got '" + data + "'");
  }
}

inline void read_adam(const json& j, const std::string& path, AdamConfig& a) {
  require_object(j, path);
  allow_keys(j, path, {"beta1", "beta2", "eps"});
  field(j, path, "beta1", a.beta1);
  field(j, path, "beta2", a.beta2);
  field(j, path, "eps", a.eps);
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0)) throw ConfigError(path + ".beta1", "must lie in [0, 1)");
  if (!(a.beta2 >= 0.0 && a.beta2 < 1.0)) throw ConfigError(path + ".beta2", "must lie in [0, 1)");
  if (!(a.eps > 0.0)) throw ConfigError(path + ".eps", "must be positive");
}

inline void check_schedule(const std::string& path, std::uint64_t total, std::size_t batch, double lr,
                           double warmup, double clip) {
  if (total < 1) throw ConfigError(path + ".total_steps", "must be at least 1");
  if (batch < 1) throw ConfigError(path + ".batch_size", "must be at least 1");
  if (!(lr > 0.0)) throw ConfigError(path + ".lr_peak", "must be positive");
  if (!(warmup > 0.0 && warmup < 1.0)) throw ConfigError(path + ".warmup_fraction", "must lie in (0, 1)");
  if (!(clip > 0.0)) throw ConfigError(path + ".clip_norm", "must be positive");
}

}  // namespace detail

inline model::ModelConfig parse_model_config(const json& j, const std::string& path = "model") {
  using namespace detail;
  model::ModelConfig m;
  require_object(j, path);
  allow_keys(j, path, {"encoder", "context", "quantizer"});
  if (auto it = j.find("encoder"); it != j.end()) {
    const std::string p = path + ".encoder";
    require_object(*it, p);
    allow_keys(*it, p, {"channels", "strides", "kernels"});
    field(*it, p, "channels", m.encoder.channels);
    field(*it, p, "strides", m.encoder.strides);
    field(*it, p, "kernels", m.encoder.kernels);
  }
  if (auto it = j.find("context"); it != j.end()) {
    const std::string p = path + ".context";
    require_object(*it, p);
    allow_keys(*it, p, {"layers", "dim", "heads", "ffn_inner", "pos_kernel", "pos_groups"});
    field(*it, p, "layers", m.context.layers);
    field(*it, p, "dim", m.context.dim);
    field(*it, p, "heads", m.context.heads);
    field(*it, p, "ffn_inner", m.context.ffn_inner);
    field(*it, p, "pos_kernel", m.context.pos_kernel);
    field(*it, p, "pos_groups", m.context.pos_groups);
  }
  if (auto it = j.find("quantizer"); it != j.end()) {
    const std::string p = path + ".quantizer";
    require_object(*it, p);
    allow_keys(*it, p, {"groups", "entries", "entry_dim"});
    field(*it, p, "groups", m.quantizer.groups);
    field(*it, p, "entries", m.quantizer.entries);
    field(*it, p, "entry_dim", m.quantizer.entry_dim);
  }
  validated(path, [&] { m.validate(); });
  return m;
}

inline RunConfig parse_config(const json& j) {
  using namespace detail;
  RunConfig c;
  require_object(j, "");
  allow_keys(j, "", {"seed", "data", "model", "pretrain", "finetune", "eval"});
  field(j, "", "seed", c.seed);

  if (auto it = j.find("data"); it != j.end()) {
    const json& d = *it;
    auto& k = c.data.corpus;
    require_object(d, "data");
    allow_keys(d, "data",
               {"n_utterances", "n_test_utterances", "min_chars", "max_chars", "alphabet_size", "tone_base_hz",
                "char_duration_ms", "space_probability", "noise_types", "noise_streams_per_type",
                "test_noise_streams_per_type", "noise_duration_ms", "dither", "corpus_seed", "snr_set", "offset_policy"});
    field(d, "data", "n_utterances", k.n_utterances);
    field(d, "data", "n_test_utterances", k.n_test_utterances);
    field(d, "data", "min_chars", k.min_chars);
    field(d, "data", "max_chars", k.max_chars);
    field(d, "data", "alphabet_size", k.alphabet_size);
    field(d, "data", "tone_base_hz", k.tone_base_hz);
    field(d, "data", "char_duration_ms", k.char_duration_ms);
    field(d, "data", "space_probability", k.space_probability);
    field(d, "data", "noise_types", k.noise_types);
    field(d, "data", "noise_streams_per_type", k.noise_streams_per_type);
    field(d, "data", "test_noise_streams_per_type", k.test_noise_streams_per_type);
    field(d, "data", "noise_duration_ms", k.noise_duration_ms);
    field(d, "data", "dither", k.dither);
    field(d, "data", "corpus_seed", k.seed);
    field(d, "data", "snr_set", c.data.snr_set);
    std::string policy = offset_policy_name(c.data.offset_policy);
    field(d, "data", "offset_policy", policy);
    if (policy == "random_start") {
      c.data.offset_policy = audio::OffsetPolicy::random_start;
    } else if (policy == "fixed_start") {
      c.data.offset_policy = audio::OffsetPolicy::fixed_start;
    } else {
      throw ConfigError("data.offset_policy", "expected random_start or fixed_start, got '" + policy + "'");
    }
  }
  validated("data", [&] { c.data.corpus.validate(); });
  if (c.data.corpus.n_utterances < 1) throw ConfigError("data.n_utterances", "must be at least 1");
  if (c.data.snr_set.empty()) throw ConfigError("data.snr_set", "must not be empty");

  if (auto it = j.find("model"); it != j.end()) {
    c.model = parse_model_config(*it);
  } else {
    validated("model", [&] { c.model.validate(); });
  }

  if (auto it = j.find("pretrain"); it != j.end()) {
    const json& p = *it;
    auto& t = c.pretrain;
    require_object(p, "pretrain");
    allow_keys(p, "pretrain",
               {"data", "total_steps", "batch_size", "lr_peak", "warmup_fraction", "adam", "clip_norm", "loss",
                "mask", "gumbel", "checkpoint_every"});
    read_train_data(p, "pretrain", t.data);
    field(p, "pretrain", "total_steps", t.total_steps);
    field(p, "pretrain", "batch_size", t.batch_size);
    field(p, "pretrain", "lr_peak", t.lr_peak);
    field(p, "pretrain", "warmup_fraction", t.warmup_fraction);
    field(p, "pretrain", "clip_norm", t.clip_norm);
    field(p, "pretrain", "checkpoint_every", t.checkpoint_every);
    if (auto a = p.find("adam"); a != p.end()) read_adam(*a, "pretrain.adam", t.adam);
    if (auto l = p.find("loss"); l != p.end()) {
      require_object(*l, "pretrain.loss");
      allow_keys(*l, "pretrain.loss", {"alpha", "beta", "gamma", "kappa", "distractors"});
      field(*l, "pretrain.loss", "alpha", t.loss.alpha);
      field(*l, "pretrain.loss", "beta", t.loss.beta);
      field(*l, "pretrain.loss", "gamma", t.loss.gamma);
      field(*l, "pretrain.loss", "kappa", t.loss.kappa);
      field(*l, "pretrain.loss", "distractors", t.loss.distractors);
    }
    if (auto m = p.find("mask"); m != p.end()) {
      require_object(*m, "pretrain.mask");
      allow_keys(*m, "pretrain.mask", {"p", "span"});
      field(*m, "pretrain.mask", "p", t.mask.p);
      field(*m, "pretrain.mask", "span", t.mask.span);
    }
    if (auto g = p.find("gumbel"); g != p.end()) {
      require_object(*g, "pretrain.gumbel");
      allow_keys(*g, "pretrain.gumbel", {"start", "floor", "decay"});
      field(*g, "pretrain.gumbel", "start", t.gumbel.start);
      field(*g, "pretrain.gumbel", "floor", t.gumbel.floor);
      field(*g, "pretrain.gumbel", "decay", t.gumbel.decay);
    }
  }
  {
    const auto& t = c.pretrain;
    check_schedule("pretrain", t.total_steps, t.batch_size, t.lr_peak, t.warmup_fraction, t.clip_norm);
    validated("pretrain", [&] { t.loss.validate(); });
    validated("pretrain", [&] { t.mask.validate(); });
    if (!(t.gumbel.floor > 0.0)) throw ConfigError("pretrain.gumbel.floor", "must be positive");
    if (!(t.gumbel.start >= t.gumbel.floor)) throw ConfigError("pretrain.gumbel.start", "must be at least the floor");
    if (!(t.gumbel.decay > 0.0 && t.gumbel.decay <= 1.0)) throw ConfigError("pretrain.gumbel.decay", "must lie in (0, 1]");
  }

  if (auto it = j.find("finetune"); it != j.end()) {
    const json& p = *it;
    auto& t = c.finetune;
    require_object(p, "finetune");
    allow_keys(p, "finetune",
               {"total_steps", "batch_size", "lr_peak", "warmup_fraction", "adam", "clip_norm", "freeze_fraction",
                "data", "checkpoint_every"});
    field(p, "finetune", "total_steps", t.total_steps);
    field(p, "finetune", "batch_size", t.batch_size);
    field(p, "finetune", "lr_peak", t.lr_peak);
    field(p, "finetune", "warmup_fraction", t.warmup_fraction);
    field(p, "finetune", "clip_norm", t.clip_norm);
    field(p, "finetune", "freeze_fraction", t.freeze_fraction);
    field(p, "finetune", "checkpoint_every", t.checkpoint_every);
    if (auto a = p.find("adam"); a != p.end()) read_adam(*a, "finetune.adam", t.adam);
    read_train_data(p, "finetune", t.data);
  }
  {
    const auto& t = c.finetune;
    check_schedule("finetune", t.total_steps, t.batch_size, t.lr_peak, t.warmup_fraction, t.clip_norm);
    if (!(t.freeze_fraction >= 0.0 && t.freeze_fraction < 1.0)) {
      throw ConfigError("finetune.freeze_fraction", "must lie in [0, 1)");
    }
  }

  if (auto it = j.find("eval"); it != j.end()) {
    require_object(*it, "eval");
    allow_keys(*it, "eval", {"snr_set", "plots"});
    field(*it, "eval", "snr_set", c.eval.snr_set);
    field(*it, "eval", "plots", c.eval.plots);
  }
  if (c.eval.snr_set.empty()) throw ConfigError("eval.snr_set", "must not be empty");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace ew2v::training
