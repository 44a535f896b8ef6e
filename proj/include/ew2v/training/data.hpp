// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <vector>

#include "ew2v/audio/corpus.hpp"

namespace ew2v::training {

using Dataset = audio::ToyCorpus;

// Reads manifest.jsonl, test_manifest.jsonl (optional) and noise_bank.jsonl
// from a directory written by synth-data.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.train = audio::load_utterances(audio::read_manifest(dir / "manifest.jsonl"));
  if (std::filesystem::exists(dir / "test_manifest.jsonl")) {
    d.test = audio::load_utterances(audio::read_manifest(dir / "test_manifest.jsonl"));
  }
  d.noise = audio::load_noise_bank(audio::read_noise_bank(dir / "noise_bank.jsonl"));
  return d;
}

struct StreamPair {
  std::span<const float> clean;
  std::span<const float> noisy;
};

// Per-epoch shuffled batches over freshly re-mixed noisy pairs. Epoch e uses
// mixing seed root.derive("mix").derive(e) and order root.derive("shuffle").derive(e),
// so any step's batch is a pure function of (root, step).
class EpochSampler {
 public:
  EpochSampler(const std::vector<audio::Utterance>& utterances, std::vector<const audio::NoiseStream*> noise,
               std::vector<double> snr_set, audio::OffsetPolicy policy, RngStream root, std::size_t batch_size)
      : utts_(&utterances), noise_(std::move(noise)), snr_(std::move(snr_set)), policy_(policy), root_(root),
        batch_(batch_size) {
    if (utterances.empty()) throw Error("sampler: no training utterances");
    if (batch_ < 1) throw Error("sampler: batch size must be positive");
  }

  std::size_t steps_per_epoch() const { return (utts_->size() + batch_ - 1) / batch_; }
  std::uint64_t epoch_of(std::uint64_t step) const { return step / steps_per_epoch(); }

  std::vector<const audio::NoisyPair*> batch(std::uint64_t step) {
    load_epoch(epoch_of(step));
    const std::size_t b = static_cast<std::size_t>(step % steps_per_epoch());
    std::vector<const audio::NoisyPair*> out;
    for (std::size_t i = b * batch_; i < std::min(order_.size(), (b + 1) * batch_); ++i) out.push_back(&pairs_[order_[i]]);
    return out;
  }

 private:
  void load_epoch(std::uint64_t e) {
    if (loaded_ && e == epoch_) return;
    pairs_ = audio::build_noisy_set(*utts_, noise_, snr_, root_.derive("mix").derive(e).seed(), policy_);
    order_.resize(pairs_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    RngStream r = root_.derive("shuffle").derive(e);
    r.shuffle(order_.begin(), order_.end());
    epoch_ = e;
    loaded_ = true;
  }

  const std::vector<audio::Utterance>* utts_;
  std::vector<const audio::NoiseStream*> noise_;
  std::vector<double> snr_;
  audio::OffsetPolicy policy_;
  RngStream root_;
  std::size_t batch_;
  bool loaded_ = false;
  std::uint64_t epoch_ = 0;
  std::vector<audio::NoisyPair> pairs_;
  std::vector<std::size_t> order_;
};

}  // namespace ew2v::training
