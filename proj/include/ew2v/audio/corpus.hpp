// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Toy tone-coded corpus, noise bank, JSONL manifests and paired noisy sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ew2v/audio/mixing.hpp"
#include "ew2v/audio/waveform.hpp"
#include "ew2v/numerics/rng.hpp"

namespace ew2v::audio {

namespace fs = std::filesystem;

struct Utterance {
  std::string id;
  std::string transcript;
  Waveform wave;
};

struct NoiseStream {
  std::string id;
  std::string type;   // white | lowpass | am_tone for the toy bank
  std::string split;  // train | test
  Waveform wave;
};

struct ManifestEntry {
  std::string utt_id;
  std::string audio_path;
  std::string transcript;
  std::size_t duration_samples = 0;
};

struct NoiseBankEntry {
  std::string noise_id;
  std::string noise_type;
  std::string split;
  std::string audio_path;
  std::size_t duration_samples = 0;
};

inline const std::vector<std::string>& toy_noise_types() {
  static const std::vector<std::string> types{"white", "lowpass", "am_tone"};
  return types;
}

// Transcript symbols accepted in manifests (the printable part of the
// fine-tuning vocabulary).
inline bool is_transcript_symbol(char c) { return (c >= 'A' && c <= 'Z') || c == ' ' || c == '\''; }

inline void validate_transcript(const std::string& s, const std::string& where) {
  for (char c : s) {
    if (!is_transcript_symbol(c)) {
      throw Error(where + ": transcript symbol '" + std::string(1, c) + "' outside the vocabulary");
    }
  }
}

struct ToyCorpusConfig {
  std::size_t n_utterances = 64;
  std::size_t n_test_utterances = 16;
  std::size_t min_chars = 3;
  std::size_t max_chars = 5;
  std::size_t alphabet_size = 3;
  double tone_base_hz = 400.0;
  double char_duration_ms = 80.0;
  double space_probability = 0.3;
  std::vector<std::string> noise_types{"white", "lowpass", "am_tone"};
  std::size_t noise_streams_per_type = 2;
  std::size_t test_noise_streams_per_type = 2;
  double noise_duration_ms = 2000.0;
  // Rms of a Gaussian floor added to every clean render, so no frame is
  // exactly silent; 1e-3 is -60 dBFS.
  double dither = 1e-3;
  std::uint64_t seed = 1;

  double char_frequency(char c) const {
    return tone_base_hz * (1.0 + static_cast<double>(c - 'A') * 0.25);
  }

  void validate() const {
    if (alphabet_size < 1 || alphabet_size > 26) {
      throw ConfigError("alphabet_size", "must be in [1, 26], got " + std::to_string(alphabet_size));
    }
    if (min_chars < 1 || max_chars < min_chars) throw ConfigError("utterance_chars", "need 1 <= min <= max");
    if (!(tone_base_hz > 0.0)) throw ConfigError("tone_base_hz", "must be positive");
    const double top = char_frequency(static_cast<char>('A' + alphabet_size - 1));
    if (!(top < kSampleRate / 2.0)) {
      throw ConfigError("tone_base_hz", "highest character tone " + std::to_string(top) + " Hz reaches Nyquist");
    }
    if (!(char_duration_ms >= 10.0)) throw ConfigError("char_duration_ms", "must be at least 10 ms (two ramps)");
    if (!(space_probability >= 0.0 && space_probability < 1.0)) {
      throw ConfigError("space_probability", "must be in [0, 1)");
    }
    if (noise_types.empty()) throw ConfigError("noise_types", "must not be empty");
    for (const auto& t : noise_types) {
      const auto& known = toy_noise_types();
      if (std::find(known.begin(), known.end(), t) == known.end()) {
        throw ConfigError("noise_types", "unknown noise type '" + t + "'");
      }
    }
    if (noise_streams_per_type < 2) throw ConfigError("noise_streams_per_type", "need at least 2");
    if (n_test_utterances > 0 && test_noise_streams_per_type < 1) {
      throw ConfigError("test_noise_streams_per_type", "need at least 1 when test utterances are requested");
    }
    if (noise_duration_ms < 100.0) throw ConfigError("noise_duration_ms", "must be at least 100 ms");
    if (!(dither >= 0.0 && dither < 0.1)) throw ConfigError("dither", "must lie in [0, 0.1)");
  }
};

inline std::string random_transcript(const ToyCorpusConfig& cfg, RngStream& rng) {
  const std::size_t n = cfg.min_chars + rng.index(cfg.max_chars - cfg.min_chars + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && rng.bernoulli(cfg.space_probability)) s.push_back(' ');
    s.push_back(static_cast<char>('A' + rng.index(cfg.alphabet_size)));
  }
  return s;
}

// One segment of char_duration per symbol: letters are sine tones with 5 ms
// raised-cosine on/off ramps, spaces are silence.
inline Waveform render_transcript(const std::string& transcript, const ToyCorpusConfig& cfg, double amplitude,
                                  double phase) {
  const std::size_t seg = ms_to_samples(cfg.char_duration_ms);
  const std::size_t ramp = ms_to_samples(5.0);
  Waveform w;
  w.samples.assign(seg * transcript.size(), 0.0f);
  for (std::size_t k = 0; k < transcript.size(); ++k) {
    const char c = transcript[k];
    if (c == ' ') continue;
    if (c < 'A' || c >= static_cast<char>('A' + cfg.alphabet_size)) {
      throw Error("render_transcript: symbol '" + std::string(1, c) + "' outside the toy alphabet");
    }
    const double f = cfg.char_frequency(c);
    for (std::size_t i = 0; i < seg; ++i) {
      double env = 1.0;
      if (i < ramp) env = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / ramp));
      else if (i >= seg - ramp) env = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(seg - 1 - i) / ramp));
      const double t = static_cast<double>(k * seg + i) / kSampleRate;
      w.samples[k * seg + i] = static_cast<float>(amplitude * env * std::sin(2.0 * std::numbers::pi * f * t + phase));
    }
  }
  return w;
}

inline Waveform synth_noise(const std::string& type, std::size_t length, RngStream rng) {
  std::vector<double> x(length);
  if (type == "white") {
    for (auto& v : x) v = rng.normal();
  } else if (type == "lowpass") {
    const double a = rng.uniform(0.85, 0.97);
    double y = 0.0;
    for (auto& v : x) {
      y = a * y + (1.0 - a) * rng.normal();
      v = y;
    }
  } else if (type == "am_tone") {
    const double fc = rng.uniform(150.0, 3500.0);
    const double fm = rng.uniform(1.0, 6.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      x[i] = (1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * fm * t)) * std::sin(2.0 * std::numbers::pi * fc * t + phase) +
             0.1 * rng.normal();
    }
  } else {
    throw Error("synth_noise: unknown noise type '" + type + "'");
  }
  const double p = mean_power(x);
  const double g = 0.1 / std::sqrt(p);  // rms 0.1
  Waveform w;
  w.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) w.samples[i] = static_cast<float>(g * x[i]);
  return w;
}

struct ToyCorpus {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
  std::vector<NoiseStream> noise;
};

// Pure function of the config (including its seed).
inline ToyCorpus synth_toy_corpus(const ToyCorpusConfig& cfg) {
  cfg.validate();
  const RngStream root(cfg.seed);
  ToyCorpus out;
  auto make = [&](std::vector<Utterance>& dst, std::size_t n, const char* split) {
    RngStream rng = root.derive(split);
    for (std::size_t i = 0; i < n; ++i) {
      Utterance u;
      u.id = std::string(split) + "_" + std::to_string(i);
      u.transcript = random_transcript(cfg, rng);
      const double amp = rng.uniform(0.3, 0.7);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      u.wave = render_transcript(u.transcript, cfg, amp, phase);
      if (cfg.dither > 0.0) {
        RngStream d = root.derive("dither").derive(u.id);
        for (auto& v : u.wave.samples) v = static_cast<float>(v + cfg.dither * d.normal());
      }
      dst.push_back(std::move(u));
    }
  };
  make(out.train, cfg.n_utterances, "train");
  make(out.test, cfg.n_test_utterances, "test");
  const std::size_t len = ms_to_samples(cfg.noise_duration_ms);
  for (const char* split : {"train", "test"}) {
    const std::size_t per = std::string(split) == "train" ? cfg.noise_streams_per_type : cfg.test_noise_streams_per_type;
    if (std::string(split) == "test" && cfg.n_test_utterances == 0) break;
    for (const auto& type : cfg.noise_types) {
      for (std::size_t k = 0; k < per; ++k) {
        NoiseStream s;
        s.id = type + "_" + split + "_" + std::to_string(k);
        s.type = type;
        s.split = split;
        s.wave = synth_noise(type, len, root.derive("noise").derive(s.id));
        out.noise.push_back(std::move(s));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON Lines

inline void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw IoError("write_manifest: cannot open " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["utt_id"] = e.utt_id;
    j["audio_path"] = e.audio_path;
    j["transcript"] = e.transcript;
    j["duration_samples"] = e.duration_samples;
    f << j.dump() << '\n';
  }
}

// Relative audio paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_manifest: cannot open " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.audio_path = j.at("audio_path").get<std::string>();
      e.transcript = j.at("transcript").get<std::string>();
      e.duration_samples = j.at("duration_samples").get<std::size_t>();
      e.utt_id = j.contains("utt_id") ? j["utt_id"].get<std::string>() : fs::path(e.audio_path).stem().string();
      validate_transcript(e.transcript, where);
      fs::path p(e.audio_path);
      if (p.is_relative()) p = path.parent_path() / p;
      if (!fs::exists(p)) throw IoError(where + ": audio_path does not resolve: " + p.string());
      e.audio_path = p.string();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(where + ": " + ex.what());
    }
  }
  return out;
}

inline void write_noise_bank(const fs::path& path, const std::vector<NoiseBankEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw IoError("write_noise_bank: cannot open " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["noise_id"] = e.noise_id;
    j["noise_type"] = e.noise_type;
    j["split"] = e.split;
    j["audio_path"] = e.audio_path;
    j["duration_samples"] = e.duration_samples;
    f << j.dump() << '\n';
  }
}

inline std::vector<NoiseBankEntry> read_noise_bank(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_noise_bank: cannot open " + path.string());
  std::vector<NoiseBankEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NoiseBankEntry e;
      e.noise_id = j.at("noise_id").get<std::string>();
      e.noise_type = j.at("noise_type").get<std::string>();
      e.split = j.value("split", "train");
      e.audio_path = j.at("audio_path").get<std::string>();
      e.duration_samples = j.value("duration_samples", std::size_t{0});
      fs::path p(e.audio_path);
      if (p.is_relative()) p = path.parent_path() / p;
      e.audio_path = p.string();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

inline std::vector<Utterance> load_utterances(const std::vector<ManifestEntry>& manifest) {
  std::vector<Utterance> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) out.push_back({e.utt_id, e.transcript, load_wav(e.audio_path)});
  return out;
}

inline std::vector<NoiseStream> load_noise_bank(const std::vector<NoiseBankEntry>& bank) {
  std::vector<NoiseStream> out;
  for (const auto& e : bank) out.push_back({e.noise_id, e.noise_type, e.split, load_wav(e.audio_path)});
  return out;
}

// Writes wav files, manifest.jsonl (train), test_manifest.jsonl (if any) and
// noise_bank.jsonl under out_dir. Paths in the manifests are relative.
struct WrittenCorpus {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::vector<NoiseBankEntry> noise;
};

inline WrittenCorpus write_toy_corpus(const ToyCorpus& corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "noise");
  WrittenCorpus w;
  auto dump = [&](const std::vector<Utterance>& us, std::vector<ManifestEntry>& dst) {
    for (const auto& u : us) {
      const std::string rel = "clean/" + u.id + ".wav";
      save_wav(out_dir / rel, u.wave);
      dst.push_back({u.id, rel, u.transcript, u.wave.size()});
    }
  };
  dump(corpus.train, w.train);
  dump(corpus.test, w.test);
  for (const auto& n : corpus.noise) {
    const std::string rel = "noise/" + n.id + ".wav";
    save_wav(out_dir / rel, n.wave);
    w.noise.push_back({n.id, n.type, n.split, rel, n.wave.size()});
  }
  write_manifest(out_dir / "manifest.jsonl", w.train);
  if (!w.test.empty()) write_manifest(out_dir / "test_manifest.jsonl", w.test);
  write_noise_bank(out_dir / "noise_bank.jsonl", w.noise);
  return w;
}

// ---------------------------------------------------------------------------
// Paired noisy sets

struct NoisyPair {
  std::string utt_id;
  Waveform clean;
  Waveform noisy;
  std::string transcript;
  double snr_db = 0.0;
  std::string noise_id;
  std::string noise_type;
  double gain = 0.0;
  std::size_t offset = 0;
  std::size_t clip_count = 0;
};

inline std::vector<const NoiseStream*> select_noise(const std::vector<NoiseStream>& bank, const std::string& split) {
  std::vector<const NoiseStream*> out;
  for (const auto& n : bank)
    if (split.empty() || n.split == split) out.push_back(&n);
  return out;
}

// One noise stream and one SNR per utterance, drawn from the seed. The clean
// twin stays attached to each noisy clip.
inline std::vector<NoisyPair> build_noisy_set(const std::vector<Utterance>& utterances,
                                              const std::vector<const NoiseStream*>& noise,
                                              const std::vector<double>& snr_set, std::uint64_t seed,
                                              OffsetPolicy policy = OffsetPolicy::random_start) {
  if (snr_set.empty()) throw Error("build_noisy_set: snr_set is empty");
  if (noise.empty()) throw Error("build_noisy_set: noise bank is empty");
  const RngStream root(seed);
  std::vector<NoisyPair> out;
  out.reserve(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    RngStream rng = root.derive(i);
    const NoiseStream& ns = *noise[rng.index(noise.size())];
    MixSpec spec{snr_set[rng.index(snr_set.size())], ns.id, rng.next_u64(), policy};
    auto mix = mix_at_snr(utterances[i].wave, ns.wave, spec);
    out.push_back({utterances[i].id, utterances[i].wave, std::move(mix.noisy), utterances[i].transcript,
                   spec.snr_db, ns.id, ns.type, mix.gain, mix.offset, mix.clip_count});
  }
  return out;
}

// Mixing metadata CSV: utt_id, noise_id, snr_db, gain, clip_count.
inline std::string mixing_csv(const std::vector<NoisyPair>& pairs) {
  std::ostringstream os;
  os << "utt_id,noise_id,snr_db,gain,clip_count\n";
  os.precision(9);
  for (const auto& p : pairs) {
    os << p.utt_id << ',' << p.noise_id << ',' << p.snr_db << ',' << p.gain << ',' << p.clip_count << '\n';
  }
  return os.str();
}

}  // namespace ew2v::audio
