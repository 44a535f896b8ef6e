// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ew2v/audio/waveform.hpp"
#include "ew2v/numerics/rng.hpp"

namespace ew2v::audio {

enum class OffsetPolicy { random_start, fixed_start };

struct MixSpec {
  double snr_db = 0.0;
  std::string noise_id;
  std::uint64_t seed = 0;
  OffsetPolicy offset_policy = OffsetPolicy::random_start;
};

struct MixResult {
  Waveform noisy;
  double gain = 0.0;
  std::size_t offset = 0;
  // Samples of the (unclamped) mixture outside [-1, 1].
  std::size_t clip_count = 0;
};

// Noise of the requested length starting at `offset`, looping when the
// stream is shorter than `length`.
inline std::vector<float> noise_segment(const Waveform& noise, std::size_t length, std::size_t offset) {
  if (noise.empty()) throw Error("noise_segment: empty noise stream");
  std::vector<float> seg(length);
  const std::size_t n = noise.size();
  for (std::size_t i = 0; i < length; ++i) seg[i] = noise.samples[(offset + i) % n];
  return seg;
}

inline std::size_t choose_offset(std::size_t clean_len, std::size_t noise_len, const MixSpec& spec) {
  if (spec.offset_policy == OffsetPolicy::fixed_start) return 0;
  RngStream rng(spec.seed);
  const std::size_t span = noise_len > clean_len ? noise_len - clean_len + 1 : noise_len;
  return static_cast<std::size_t>(rng.index(span));
}

// g = sqrt(P_clean / (P_noise * 10^(snr/10))), with powers taken over the
// whole clip and the cropped/looped noise segment.
inline double snr_gain(double p_clean, double p_noise, double snr_db) {
  return std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

inline double snr_db_of(double p_clean, double p_noise) { return 10.0 * std::log10(p_clean / p_noise); }

// clean + g * noise_segment. The result is not renormalized; samples may
// exceed [-1, 1] and are only clamped when written.
inline MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, const MixSpec& spec) {
  if (!std::isfinite(spec.snr_db)) throw Error("mix_at_snr: snr_db must be finite");
  if (clean.empty()) throw Error("mix_at_snr: empty clean waveform");
  if (noise.empty()) throw Error("mix_at_snr: empty noise stream '" + spec.noise_id + "'");
  const double p_clean = mean_power(clean);
  if (!(p_clean > 0.0)) throw Error("mix_at_snr: clean waveform is silent");
  MixResult res;
  res.offset = choose_offset(clean.size(), noise.size(), spec);
  const auto seg = noise_segment(noise, clean.size(), res.offset);
  const double p_noise = mean_power(seg);
  if (!(p_noise > 0.0)) throw Error("mix_at_snr: noise segment of '" + spec.noise_id + "' is silent");
  res.gain = snr_gain(p_clean, p_noise, spec.snr_db);
  res.noisy.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double v = static_cast<double>(clean.samples[i]) + res.gain * static_cast<double>(seg[i]);
    res.noisy.samples[i] = static_cast<float>(v);
    if (v > 1.0 || v < -1.0) ++res.clip_count;
  }
  return res;
}

}  // namespace ew2v::audio
