// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ew2v/training/config.hpp"
#include "ew2v/training/data.hpp"

namespace ew2v::training {

// enhanced: both streams through the shared encoder, quantized targets from
// the clean stream, consistency term on. baseline: the noisy stream alone
// feeds masking, quantization and the feature penalty; gamma is forced to 0.
enum class PretrainMode { enhanced, baseline };

inline std::string mode_name(PretrainMode m) { return m == PretrainMode::enhanced ? "enhanced" : "baseline"; }

template <typename T>
struct PretrainOutput {
  losses::LossVars<T> loss;
  std::size_t n_masked = 0;
  model::CodeUsage usage;
};

inline losses::LossWeights effective_weights(const losses::LossWeights& w, PretrainMode mode) {
  losses::LossWeights out = w;
  if (mode == PretrainMode::baseline) out.gamma = 0.0;
  return out;
}

// One forward pass of the pretraining objective over a batch. Utterances are
// contextualized separately and concatenated for quantization and losses.
template <typename T>
PretrainOutput<T> pretrain_forward(Tape<T>& tape, model::Wav2VecModel<T>& m, const std::vector<StreamPair>& batch,
                                   const PretrainConfig& cfg, PretrainMode mode, double tau, const RngStream& rng,
                                   const model::QuantizeOptions& qopt = {}) {
  if (batch.empty()) throw Error("pretrain: empty batch");
  const bool enhanced = mode == PretrainMode::enhanced;
  std::vector<Var<T>> zn, zc, ctx;
  std::vector<losses::UtteranceMask> masks;
  std::size_t offset = 0;
  const RngStream mask_root = rng.derive("mask");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (enhanced && batch[i].clean.size() != batch[i].noisy.size()) {
      throw ShapeError("pretrain: clean and noisy twins differ in length for batch item " + std::to_string(i));
    }
    Var<T> n = m.encoder().forward(tape, batch[i].noisy);
    zn.push_back(n);
    if (enhanced) zc.push_back(m.encoder().forward(tape, batch[i].clean));
    RngStream mr = mask_root.derive(i);
    const std::size_t frames = n.shape()[0];
    auto mk = model::sample_mask(frames, cfg.mask, mr);
    ctx.push_back(m.context().contextualize(tape, m.context().apply_mask(tape, n, mk.mask)));
    masks.push_back({offset, frames, mk.indices});
    offset += frames;
  }
  Var<T> Zn = ops::concat_rows(zn);
  Var<T> Zt = enhanced ? ops::concat_rows(zc) : Zn;
  Var<T> C = ops::concat_rows(ctx);

  RngStream qr = rng.derive("quantizer");
  auto qo = m.quantizer().quantize(tape, Zt, tau, qr, qopt);
  RngStream dr = rng.derive("distractors");
  const auto tab = losses::sample_distractors(masks, cfg.loss.distractors, dr);

  Var<T> l_m = losses::contrastive_loss(C, qo.q, tab, cfg.loss.kappa);
  Var<T> l_d = losses::diversity_loss(qo.p_bar, m.quantizer().config().groups, m.quantizer().config().entries);
  Var<T> l_f = enhanced ? losses::feature_penalty(Zn, Zt) : ops::mean_square(std::vector<Var<T>>{Zn});
  Var<T> l_c = enhanced ? losses::consistency_loss(Zn, Zt) : tape.constant(Tensor<T>::scalar(T(0)));
  PretrainOutput<T> out{losses::total_loss(l_m, l_d, l_f, l_c, effective_weights(cfg.loss, mode)),
                        tab.masked_rows.size(), std::move(qo.usage)};
  return out;
}

struct StepRecord {
  std::uint64_t step = 0;  // 1-based
  losses::LossBreakdown loss;
  double tau = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  bool applied = false;
  std::string incident;
};

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string pretrain_log_csv(const std::vector<StepRecord>& log) {
  std::string s = "step,l_m,l_d,l_f,l_c,total,tau,lr,n_masked\n";
  for (const auto& r : log) {
    if (!r.applied) continue;
    s += std::to_string(r.step) + ',' + fmt_num(r.loss.l_m) + ',' + fmt_num(r.loss.l_d) + ',' + fmt_num(r.loss.l_f) +
         ',' + fmt_num(r.loss.l_c) + ',' + fmt_num(r.loss.total) + ',' + fmt_num(r.tau) + ',' + fmt_num(r.lr) + ',' +
         std::to_string(r.loss.n_masked) + '\n';
  }
  return s;
}

inline std::string incidents_csv(const std::vector<StepRecord>& log) {
  std::string s = "step,incident\n";
  for (const auto& r : log)
    if (!r.applied) s += std::to_string(r.step) + ",\"" + r.incident + "\"\n";
  return s;
}

// Serial pretraining driver. The optimizer update at 0-based step s uses
// tau(s) and lr_at(s + 1) and is logged as step s + 1. A non-finite loss or
// gradient skips the update and leaves parameters and moments untouched.
class Pretrainer {
 public:
  Pretrainer(model::Wav2VecModel<float>& m, const RunConfig& cfg, PretrainMode mode, const Dataset& data)
      : model_(&m), cfg_(cfg), mode_(mode), root_(RngStream(cfg.seed).derive("pretrain")),
        sampler_(data.train, audio::select_noise(data.noise, "train"), cfg.data.snr_set, cfg.data.offset_policy,
                 root_, cfg.pretrain.batch_size),
        params_(m.parameters()), adam_(params_, cfg.pretrain.adam) {
    if (!m.has_quantizer()) throw Error("pretrain: model has no quantizer");
  }

  std::uint64_t steps_done() const { return step_; }
  bool finished() const { return step_ >= cfg_.pretrain.total_steps; }
  const std::vector<StepRecord>& log() const { return log_; }

  // Fault hook for tests: called on the loss breakdown before backward.
  std::function<void(losses::LossBreakdown&)> perturb;

  StepRecord step() {
    const std::uint64_t s = step_++;
    StepRecord rec;
    rec.step = s + 1;
    rec.tau = cfg_.pretrain.gumbel.tau(s);
    rec.lr = cfg_.pretrain.schedule().at(s + 1);
    const auto items = sampler_.batch(s);
    std::vector<StreamPair> batch;
    const bool clean = cfg_.pretrain.data == TrainData::clean;
    for (const auto* p : items) batch.push_back({p->clean.samples, clean ? p->clean.samples : p->noisy.samples});
    zero_grads(params_);
    try {
      Tape<float> tape;
      auto out = pretrain_forward(tape, *model_, batch, cfg_.pretrain, mode_, rec.tau, root_.derive("step").derive(s));
      rec.loss = {out.loss.l_m.value().item(), out.loss.l_d.value().item(), out.loss.l_f.value().item(),
                  out.loss.l_c.value().item(), out.loss.total.value().item(), out.n_masked};
      if (perturb) perturb(rec.loss);
      if (!std::isfinite(rec.loss.total)) throw NonFiniteError("total loss is not finite");
      tape.backward(out.loss.total);
      rec.grad_norm = clip_grad_norm(params_, cfg_.pretrain.clip_norm);
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
    return rec;
  }

  std::map<std::string, std::uint64_t> rng_counters() const {
    return {{"pretrain.next_step", step_}, {"pretrain.epoch", sampler_.epoch_of(step_)}};
  }

 private:
  model::Wav2VecModel<float>* model_;
  RunConfig cfg_;
  PretrainMode mode_;
  RngStream root_;
  EpochSampler sampler_;
  std::vector<Parameter<float>*> params_;
  Adam<float> adam_;
  std::uint64_t step_ = 0;
  std::vector<StepRecord> log_;
};

}  // namespace ew2v::training
