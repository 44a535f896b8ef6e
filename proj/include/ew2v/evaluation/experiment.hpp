// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ew2v/evaluation/reports.hpp"
#include "ew2v/training/finetune.hpp"
#include "ew2v/training/pretrain.hpp"

namespace ew2v::evaluation {

// Pretrains (unless mode is empty), strips the quantizer and fine-tunes.
inline model::Wav2VecModel<float> train_arm(const training::RunConfig& cfg, const training::Dataset& data,
                                            std::optional<training::PretrainMode> mode, training::TrainData ft_data) {
  model::Wav2VecModel<float> m(cfg.model, cfg.seed);
  if (mode) {
    training::Pretrainer pt(m, cfg, *mode, data);
    while (!pt.finished()) pt.step();
  }
  auto f = model::strip_and_head(std::move(m), training::CharVocab::kSize);
  training::RunConfig fc = cfg;
  fc.finetune.data = ft_data;
  training::Finetuner ft(f, fc, data);
  while (!ft.finished()) ft.step();
  return f;
}

struct SeedResult {
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<WerRow>> wer;  // keyed by arm: enhanced, baseline, none
  std::vector<SimilarityRow> similarity;
};

inline const std::vector<std::string>& arm_names() {
  static const std::vector<std::string> names{"enhanced", "baseline", "none"};
  return names;
}

// Clean baseline model for the similarity diagnostic: single-stream
// pretraining and CTC fine-tuning, both on the clean twins only.
inline model::Wav2VecModel<float> train_clean_reference(training::RunConfig cfg, const training::Dataset& data) {
  cfg.pretrain.data = training::TrainData::clean;
  return train_arm(cfg, data, training::PretrainMode::baseline, training::TrainData::clean);
}

// All three arms plus the clean reference for one seed.
inline SeedResult run_desk_seed(training::RunConfig cfg, const training::Dataset& data, const TestGrid& grid,
                                std::uint64_t seed) {
  cfg.seed = seed;
  SeedResult r;
  r.seed = seed;
  auto ref = train_clean_reference(cfg, data);
  for (const auto& arm : arm_names()) {
    std::optional<training::PretrainMode> mode;
    if (arm == "enhanced") mode = training::PretrainMode::enhanced;
    if (arm == "baseline") mode = training::PretrainMode::baseline;
    auto m = train_arm(cfg, data, mode, training::TrainData::noisy);
    r.wer[arm] = evaluate_wer(m, grid);
    auto sim = representation_similarity(arm, m, ref, grid);
    r.similarity.insert(r.similarity.end(), sim.begin(), sim.end());
  }
  return r;
}

// WER pooled over noise types at one SNR (or the clean row for +inf).
inline double pooled_wer(const std::vector<WerRow>& rows, double snr) {
  EditCounts c;
  for (const auto& r : rows)
    if (r.snr_db == snr) c += r.counts;
  return c.wer();
}

// Frame-weighted similarity pooled over noise types at one SNR.
inline double pooled_similarity(const std::vector<SimilarityRow>& rows, const std::string& model, double snr) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.model_id == model && r.snr_db == snr) {
      s += r.mean_cos * static_cast<double>(r.n_frames);
      n += r.n_frames;
    }
  if (n == 0) throw Error("pooled_similarity: no frames for " + model);
  return s / static_cast<double>(n);
}

}  // namespace ew2v::evaluation
