// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "test_util.hpp"

using namespace ew2v;
using namespace ew2v::audio;
using Catch::Approx;

namespace {

Waveform sine(std::size_t n, double freq, double amp) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / kSampleRate));
  }
  return w;
}

Waveform gaussian(std::size_t n, double rms, RngStream rng) {
  Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) v = static_cast<float>(rms * rng.normal());
  return w;
}

// SNR recomputed from the returned mixture: the noise actually added is noisy - clean.
double achieved_snr(const Waveform& clean, const Waveform& noisy) {
  std::vector<double> added(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    added[i] = static_cast<double>(noisy.samples[i]) - static_cast<double>(clean.samples[i]);
  }
  return snr_db_of(mean_power(clean), mean_power(added));
}

// Hand-built RIFF header for the rejection cases.
void write_raw_wav(const std::filesystem::path& p, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                   std::size_t frames) {
  std::string b = "RIFF";
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * channels * bits / 8);
  audio::detail::put_u32(b, 36 + data_bytes);
  b += "WAVEfmt ";
  audio::detail::put_u32(b, 16);
  audio::detail::put_u16(b, 1);
  audio::detail::put_u16(b, channels);
  audio::detail::put_u32(b, rate);
  audio::detail::put_u32(b, rate * channels * bits / 8);
  audio::detail::put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  audio::detail::put_u16(b, bits);
  b += "data";
  audio::detail::put_u32(b, data_bytes);
  b.append(data_bytes, '\0');
  std::ofstream(p, std::ios::binary) << b;
}

}  // namespace

TEST_CASE("wav round trip keeps 16-bit codes") {
  const auto dir = test::temp_dir("audio_wav");
  Waveform w;
  for (int i = 0; i < 160; ++i) w.samples.push_back(static_cast<float>((i - 80) / 100.0));
  REQUIRE(save_wav(dir / "ramp.wav", w) == 0);
  const Waveform back = load_wav(dir / "ramp.wav");
  REQUIRE(back.size() == 160);
  CHECK(back.sample_rate == kSampleRate);
  CHECK(quantize_pcm16(back.samples, nullptr) == quantize_pcm16(w.samples, nullptr));
}

TEST_CASE("wav loader rejects other formats") {
  const auto dir = test::temp_dir("audio_reject");
  write_raw_wav(dir / "stereo.wav", 2, 16000, 16, 100);
  write_raw_wav(dir / "rate.wav", 1, 8000, 16, 100);
  write_raw_wav(dir / "bits.wav", 1, 16000, 8, 100);
  CHECK_THROWS_WITH(load_wav(dir / "stereo.wav"), Catch::Matchers::ContainsSubstring("channels=2"));
  CHECK_THROWS_AS(load_wav(dir / "rate.wav"), IoError);
  CHECK_THROWS_AS(load_wav(dir / "bits.wav"), IoError);
  CHECK_THROWS_AS(load_wav(dir / "missing.wav"), IoError);
}

TEST_CASE("one second of silence loads as 16000 zeros") {
  const auto dir = test::temp_dir("audio_zero");
  write_raw_wav(dir / "zero.wav", 1, 16000, 16, 16000);
  const Waveform w = load_wav(dir / "zero.wav");
  REQUIRE(w.size() == 16000);
  for (float v : w.samples) REQUIRE(v == 0.0f);
}

TEST_CASE("clipping is counted at save time") {
  const auto dir = test::temp_dir("audio_clip");
  Waveform w;
  w.samples = {0.5f, 1.5f, -2.0f, 0.0f};
  CHECK(save_wav(dir / "clip.wav", w) == 2);
  const Waveform back = load_wav(dir / "clip.wav");
  CHECK(back.samples[1] == Approx(32767.0 / 32768.0));
  CHECK(back.samples[2] == -1.0f);
}

TEST_CASE("mean power") {
  CHECK(mean_power(sine(16000, 100.0, 1.0)) == Approx(0.5).margin(1e-6));
  Waveform c;
  c.samples.assign(50, 0.5f);
  CHECK(mean_power(c) == Approx(0.25));
  RngStream rng(3);
  const Waveform a = gaussian(400, 0.3, rng.derive("a"));
  const Waveform b = gaussian(400, 0.7, rng.derive("b"));
  Waveform ab = a;
  ab.samples.insert(ab.samples.end(), b.samples.begin(), b.samples.end());
  CHECK(mean_power(ab) == Approx(0.5 * (mean_power(a) + mean_power(b))).epsilon(1e-12));
  CHECK_THROWS_AS(mean_power(Waveform{}), Error);
}

TEST_CASE("mixing gains follow the power ratio") {
  CHECK(snr_gain(0.3, 0.3, 0.0) == Approx(1.0));
  CHECK(snr_gain(1.0, 1.0, 20.0) == Approx(0.1));
  CHECK(snr_gain(0.5, 0.01, 10.0) == Approx(std::sqrt(5.0)));

  // Unit sine against rms-0.1 noise at 10 dB: gain sqrt(5), and the output rechecks to 10 dB.
  Waveform clean = sine(16000, 250.0, 1.0);
  Waveform noise;
  noise.samples.resize(16000);
  for (std::size_t i = 0; i < noise.size(); ++i) noise.samples[i] = (i % 2 == 0) ? 0.1f : -0.1f;
  const double p_noise = mean_power(noise);
  const auto r = mix_at_snr(clean, noise, MixSpec{10.0, "square", 0, OffsetPolicy::fixed_start});
  CHECK(r.gain == Approx(std::sqrt(mean_power(clean) / (p_noise * 10.0))));
  CHECK(r.gain == Approx(std::sqrt(5.0)).epsilon(1e-5));
  CHECK(std::abs(achieved_snr(clean, r.noisy) - 10.0) < 0.01);
  CHECK(r.clip_count > 0);  // not renormalized
}

TEST_CASE("mixing rejects silent inputs and non-finite snr") {
  Waveform silent;
  silent.samples.assign(100, 0.0f);
  const Waveform tone = sine(100, 440.0, 0.5);
  CHECK_THROWS_AS(mix_at_snr(silent, tone, MixSpec{}), Error);
  CHECK_THROWS_AS(mix_at_snr(tone, silent, MixSpec{}), Error);
  CHECK_THROWS_AS(mix_at_snr(tone, Waveform{}, MixSpec{}), Error);
  CHECK_THROWS_AS(mix_at_snr(tone, tone, MixSpec{std::nan(""), "n", 0, OffsetPolicy::fixed_start}), Error);
}

TEST_CASE("short noise is looped and long noise cropped at the chosen offset") {
  Waveform noise;
  noise.samples = {1, 2, 3};
  CHECK(noise_segment(noise, 7, 1) == std::vector<float>{2, 3, 1, 2, 3, 1, 2});
  MixSpec spec{0.0, "n", 99, OffsetPolicy::random_start};
  for (std::uint64_t s = 0; s < 200; ++s) {
    spec.seed = s;
    CHECK(choose_offset(100, 150, spec) <= 50);
  }
  spec.offset_policy = OffsetPolicy::fixed_start;
  CHECK(choose_offset(100, 150, spec) == 0);
}

TEST_CASE("random mixtures hit the requested snr and reconstruct the clean twin") {
  RngStream rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    RngStream r = rng.derive(static_cast<std::uint64_t>(trial));
    const std::size_t n = 800 + r.index(4000);
    const Waveform clean = sine(n, r.uniform(100, 3000), r.uniform(0.05, 0.9));
    const Waveform noise = gaussian(500 + r.index(8000), r.uniform(0.01, 0.5), r.derive("noise"));
    const double snr = static_cast<double>(5 * r.index(6));
    const MixSpec spec{snr, "g", r.next_u64(), OffsetPolicy::random_start};
    const auto res = mix_at_snr(clean, noise, spec);
    REQUIRE(std::abs(achieved_snr(clean, res.noisy) - snr) < 0.01);
    const auto seg = noise_segment(noise, n, res.offset);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float rec = static_cast<float>(res.noisy.samples[i] - res.gain * seg[i]);
      err = std::max(err, std::abs(static_cast<double>(rec) - clean.samples[i]));
    }
    REQUIRE(err <= 1e-6);
    // Same spec, same mixture.
    REQUIRE(mix_at_snr(clean, noise, spec).noisy.samples == res.noisy.samples);
  }
}

TEST_CASE("toy transcript renders as one tone per character") {
  ToyCorpusConfig cfg;
  cfg.dither = 0.0;
  const Waveform w = render_transcript("AB", cfg, 0.5, 0.0);
  REQUIRE(w.size() == 2560);
  // Independent oracle: naive DFT magnitude, two largest local peaks.
  const std::size_t n = w.size();
  std::vector<double> mag(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += static_cast<double>(w.samples[i]) * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
    }
    mag[k] = std::abs(acc);
  }
  std::vector<std::pair<double, double>> peaks;  // (magnitude, Hz)
  for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
    if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]) peaks.push_back({mag[k], k * 16000.0 / n});
  }
  std::sort(peaks.rbegin(), peaks.rend());
  REQUIRE(peaks.size() >= 2);
  std::vector<double> top{peaks[0].second, peaks[1].second};
  std::sort(top.begin(), top.end());
  CHECK(top[0] == Approx(cfg.char_frequency('A')).margin(6.25));
  CHECK(top[1] == Approx(cfg.char_frequency('B')).margin(6.25));
  CHECK(cfg.char_frequency('A') == 400.0);
  CHECK(cfg.char_frequency('B') == 500.0);
}

TEST_CASE("character tones are distinct and below Nyquist") {
  ToyCorpusConfig cfg;
  cfg.alphabet_size = 26;
  cfg.tone_base_hz = 200.0;
  REQUIRE_NOTHROW(cfg.validate());
  for (char c = 'A'; c < 'Z'; ++c) CHECK(cfg.char_frequency(c) < cfg.char_frequency(static_cast<char>(c + 1)));
  CHECK(cfg.char_frequency('Z') < 8000.0);
  cfg.tone_base_hz = 2000.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("alphabet larger than 26 is rejected") {
  ToyCorpusConfig cfg;
  cfg.alphabet_size = 27;
  try {
    synth_toy_corpus(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "alphabet_size");
  }
}

TEST_CASE("toy corpus is deterministic and written byte-identically") {
  ToyCorpusConfig cfg;
  cfg.n_utterances = 6;
  cfg.n_test_utterances = 2;
  const auto a = test::temp_dir("audio_corpus_a");
  const auto b = test::temp_dir("audio_corpus_b");
  const auto wa = write_toy_corpus(synth_toy_corpus(cfg), a);
  write_toy_corpus(synth_toy_corpus(cfg), b);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    REQUIRE(test::read_file(e.path()) == test::read_file(b / rel));
    ++files;
  }
  CHECK(files == 6 + 2 + 3 * 2 * 2 + 3);

  // Reload through the manifests.
  const auto manifest = read_manifest(a / "manifest.jsonl");
  REQUIRE(manifest.size() == 6);
  const auto utts = load_utterances(manifest);
  for (std::size_t i = 0; i < utts.size(); ++i) {
    CHECK(utts[i].transcript == wa.train[i].transcript);
    CHECK(utts[i].wave.size() == wa.train[i].duration_samples);
    CHECK_NOTHROW(validate_transcript(utts[i].transcript, "test"));
  }
  const auto bank = load_noise_bank(read_noise_bank(a / "noise_bank.jsonl"));
  CHECK(bank.size() == 12);
  std::map<std::string, int> per_type;
  for (const auto& s : bank) per_type[s.type]++;
  for (const auto& t : toy_noise_types()) CHECK(per_type[t] == 4);

  cfg.seed = 2;
  CHECK(synth_toy_corpus(cfg).train[0].wave.samples != synth_toy_corpus(ToyCorpusConfig{}).train[0].wave.samples);
}

TEST_CASE("noise streams have rms 0.1") {
  for (const auto& t : toy_noise_types()) {
    CHECK(std::sqrt(mean_power(synth_noise(t, 8000, RngStream(5)))) == Approx(0.1).epsilon(1e-4));
  }
  CHECK_THROWS_AS(synth_noise("pink", 10, RngStream(5)), Error);
}

TEST_CASE("noisy set at a single snr and stream") {
  ToyCorpusConfig cfg;
  cfg.n_utterances = 20;
  cfg.n_test_utterances = 0;
  const auto corpus = synth_toy_corpus(cfg);
  const std::vector<const NoiseStream*> one{&corpus.noise.front()};
  const auto set = build_noisy_set(corpus.train, one, {0.0}, 7);
  REQUIRE(set.size() == 20);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set[i].snr_db == 0.0);
    CHECK(set[i].noise_id == corpus.noise.front().id);
    CHECK(set[i].clean.samples == corpus.train[i].wave.samples);
    CHECK(set[i].transcript == corpus.train[i].transcript);
    CHECK(std::abs(achieved_snr(set[i].clean, set[i].noisy)) < 0.01);
  }
  CHECK_THROWS_AS(build_noisy_set(corpus.train, {}, {0.0}, 7), Error);
  CHECK_THROWS_AS(build_noisy_set(corpus.train, one, {}, 7), Error);
}

TEST_CASE("noisy set snr histogram is uniform over the configured set") {
  ToyCorpusConfig cfg;
  cfg.n_utterances = 600;
  cfg.n_test_utterances = 0;
  cfg.min_chars = 1;
  cfg.max_chars = 1;
  cfg.dither = 0.0;
  const auto corpus = synth_toy_corpus(cfg);
  const std::vector<double> snrs{0, 5, 10, 15, 20, 25};
  const auto set = build_noisy_set(corpus.train, select_noise(corpus.noise, "train"), snrs, 42);
  std::map<double, int> hist;
  for (const auto& p : set) hist[p.snr_db]++;
  REQUIRE(hist.size() == 6);
  for (const auto& [snr, count] : hist) {
    CHECK(std::abs(count / 600.0 - 1.0 / 6.0) <= 0.05);
  }
  const auto again = build_noisy_set(corpus.train, select_noise(corpus.noise, "train"), snrs, 42);
  CHECK(mixing_csv(again) == mixing_csv(set));
  const auto other = build_noisy_set(corpus.train, select_noise(corpus.noise, "train"), snrs, 43);
  CHECK(mixing_csv(other) != mixing_csv(set));
  CHECK(mixing_csv(set).rfind("utt_id,noise_id,snr_db,gain,clip_count\n", 0) == 0);
}

TEST_CASE("manifest reader reports bad lines") {
  const auto dir = test::temp_dir("audio_manifest");
  std::ofstream(dir / "m.jsonl") << "{\"utt_id\":\"a\",\"audio_path\":\"x.wav\",\"transcript\":\"ab\",\"duration_samples\":3}\n";
  CHECK_THROWS(read_manifest(dir / "m.jsonl"));
  std::ofstream(dir / "n.jsonl") << "not json\n";
  CHECK_THROWS(read_manifest(dir / "n.jsonl"));
}
