// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ew2v/audio/corpus.hpp"
#include "ew2v/audio/mixing.hpp"

namespace ew2v::evaluation {

// One (noise type, SNR) cell of the test grid; pairs keep their clean twins.
struct GridCell {
  std::string noise_type;
  double snr_db = 0.0;
  std::vector<audio::NoisyPair> pairs;
};

struct TestGrid {
  std::vector<audio::Utterance> clean;
  std::vector<GridCell> cells;  // noise types in bank order, SNR ascending
};

// Every test utterance is mixed with every test-split noise type at every
// SNR. For a given (utterance, type) the stream and offset are fixed, so
// cells of one type differ only in the noise gain.
inline TestGrid build_test_grid(const std::vector<audio::Utterance>& test, const std::vector<audio::NoiseStream>& bank,
                                std::vector<double> snr_set, std::uint64_t seed) {
  if (test.empty()) throw Error("test grid: no test utterances");
  if (snr_set.empty()) throw Error("test grid: snr_set is empty");
  std::sort(snr_set.begin(), snr_set.end());
  std::vector<std::string> types;
  for (const auto& n : bank)
    if (n.split == "test" && std::find(types.begin(), types.end(), n.type) == types.end()) types.push_back(n.type);
  if (types.empty()) throw Error("test grid: noise bank has no test-split streams");
  TestGrid grid;
  grid.clean = test;
  const RngStream root = RngStream(seed).derive("test_grid");
  for (const auto& type : types) {
    std::vector<const audio::NoiseStream*> streams;
    for (const auto& n : bank)
      if (n.split == "test" && n.type == type) streams.push_back(&n);
    std::vector<std::pair<const audio::NoiseStream*, std::uint64_t>> choice;
    for (std::size_t i = 0; i < test.size(); ++i) {
      RngStream r = root.derive(type).derive(i);
      const auto* s = streams[r.index(streams.size())];
      choice.emplace_back(s, r.next_u64());
    }
    for (double snr : snr_set) {
      GridCell cell{type, snr, {}};
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& [s, mix_seed] = choice[i];
        auto mix = audio::mix_at_snr(test[i].wave, s->wave, {snr, s->id, mix_seed, audio::OffsetPolicy::random_start});
        cell.pairs.push_back({test[i].id, test[i].wave, std::move(mix.noisy), test[i].transcript, snr, s->id, s->type,
                              mix.gain, mix.offset, mix.clip_count});
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace ew2v::evaluation
