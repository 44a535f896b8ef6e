// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ew2v/training/config.hpp"
#include "ew2v/training/ctc.hpp"
#include "ew2v/training/data.hpp"
#include "ew2v/training/pretrain.hpp"
#include "ew2v/training/vocab.hpp"

namespace ew2v::training {

// Unmasked encoder + transformer output [frames, dim].
template <typename T>
Var<T> forward_context(Tape<T>& tape, model::Wav2VecModel<T>& m, std::span<const float> wave) {
  return m.context().contextualize(tape, m.encoder().forward(tape, wave));
}

// Per-frame character logits [frames, vocab] from the fine-tuning head.
template <typename T>
Var<T> forward_logits(Tape<T>& tape, model::Wav2VecModel<T>& m, std::span<const float> wave) {
  return m.head().forward(tape, forward_context(tape, m, wave));
}

template <typename T>
Tensor<T> infer_context(model::Wav2VecModel<T>& m, std::span<const float> wave) {
  Tape<T> tape;
  return forward_context(tape, m, wave).value();
}

template <typename T>
Tensor<T> infer_logits(model::Wav2VecModel<T>& m, std::span<const float> wave) {
  Tape<T> tape;
  return forward_logits(tape, m, wave).value();
}

struct FinetuneRecord {
  std::uint64_t step = 0;  // 1-based
  double ctc = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  bool frozen = false;
  bool applied = false;
  std::string incident;
};

inline std::string finetune_log_csv(const std::vector<FinetuneRecord>& log) {
  std::string s = "step,ctc,lr,frozen\n";
  for (const auto& r : log)
    if (r.applied) s += std::to_string(r.step) + ',' + fmt_num(r.ctc) + ',' + fmt_num(r.lr) + ',' + (r.frozen ? "1" : "0") + '\n';
  return s;
}

// CTC fine-tuning of a stripped model with a character head. Batches are
// re-mixed per epoch as in pretraining; with TrainData::clean the clean
// twins are used instead. Every parameter except the head is frozen for the
// first frozen_steps() updates.
class Finetuner {
 public:
  Finetuner(model::Wav2VecModel<float>& m, const RunConfig& cfg, const Dataset& data)
      : model_(&m), cfg_(cfg), root_(RngStream(cfg.seed).derive("finetune")),
        sampler_(data.train, audio::select_noise(data.noise, "train"), cfg.data.snr_set, cfg.data.offset_policy,
                 root_, cfg.finetune.batch_size),
        params_(m.parameters()), body_(m.body_parameters()), adam_(params_, cfg.finetune.adam) {
    if (!m.has_head()) throw Error("finetune: model has no output head");
    if (m.has_quantizer()) throw Error("finetune: quantizer must be stripped first");
    for (const auto& u : data.train) audio::validate_transcript(u.transcript, "finetune transcript of " + u.id);
  }

  std::uint64_t steps_done() const { return step_; }
  bool finished() const { return step_ >= cfg_.finetune.total_steps; }
  const std::vector<FinetuneRecord>& log() const { return log_; }

  FinetuneRecord step() {
    const std::uint64_t s = step_++;
    FinetuneRecord rec;
    rec.step = s + 1;
    rec.lr = cfg_.finetune.schedule().at(s + 1);
    rec.frozen = s < cfg_.finetune.frozen_steps();
    model_->set_frozen(body_, rec.frozen);
    const auto items = sampler_.batch(s);
    zero_grads(params_);
    try {
      Tape<float> tape;
      std::vector<Var<float>> per_utt;
      for (const auto* p : items) {
        const auto& wave = cfg_.finetune.data == TrainData::clean ? p->clean.samples : p->noisy.samples;
        per_utt.push_back(ctc_loss(forward_logits(tape, *model_, wave), CharVocab::encode(p->transcript),
                                   CharVocab::kBlank));
      }
      Var<float> loss = ops::weighted_sum(per_utt, std::vector<float>(per_utt.size(), 1.0f / static_cast<float>(per_utt.size())));
      rec.ctc = loss.value().item();
      if (!std::isfinite(rec.ctc)) throw NonFiniteError("ctc loss is not finite");
      tape.backward(loss);
      rec.grad_norm = clip_grad_norm(params_, cfg_.finetune.clip_norm);
      if (!std::isfinite(rec.grad_norm)) throw NonFiniteError("gradient norm is not finite");
    } catch (const NonFiniteError& e) {
      zero_grads(params_);
      rec.incident = e.what();
      log_.push_back(rec);
      return rec;
    }
    adam_.step(rec.lr);
    rec.applied = true;
    log_.push_back(rec);
    if (finished()) model_->set_frozen(body_, false);
    return rec;
  }

  std::map<std::string, std::uint64_t> rng_counters() const {
    return {{"finetune.next_step", step_}, {"finetune.epoch", sampler_.epoch_of(step_)}};
  }

 private:
  model::Wav2VecModel<float>* model_;
  RunConfig cfg_;
  RngStream root_;
  EpochSampler sampler_;
  std::vector<Parameter<float>*> params_;
  std::vector<Parameter<float>*> body_;
  Adam<float> adam_;
  std::uint64_t step_ = 0;
  std::vector<FinetuneRecord> log_;
};

}  // namespace ew2v::training
