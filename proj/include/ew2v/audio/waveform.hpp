// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ew2v/numerics/error.hpp"

namespace ew2v::audio {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

inline std::size_t ms_to_samples(double ms) {
  return static_cast<std::size_t>(std::llround(ms * kSampleRate / 1000.0));
}

// (1/N) * sum of squares, accumulated in double.
template <typename Range>
double mean_power(const Range& samples) {
  const std::size_t n = std::size(samples);
  if (n == 0) throw Error("mean_power: empty waveform");
  double s = 0.0;
  for (auto v : samples) s += static_cast<double>(v) * static_cast<double>(v);
  return s / static_cast<double>(n);
}

inline double mean_power(const Waveform& w) { return mean_power(w.samples); }

namespace detail {

inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// 16-bit PCM codes: round(x * 32768), clamped to [-32768, 32767].
// `clipped` counts samples whose value lay outside [-1, 1].
inline std::vector<std::int16_t> quantize_pcm16(const std::vector<float>& samples, std::size_t* clipped) {
  std::vector<std::int16_t> codes(samples.size());
  std::size_t clips = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double x = samples[i];
    if (!std::isfinite(x)) throw Error("save_wav: non-finite sample at index " + std::to_string(i));
    if (x > 1.0 || x < -1.0) ++clips;
    const double q = std::clamp(std::nearbyint(x * 32768.0), -32768.0, 32767.0);
    codes[i] = static_cast<std::int16_t>(q);
  }
  if (clipped) *clipped = clips;
  return codes;
}

// Mono 16-bit PCM at 16 kHz. Returns the number of clipped samples.
inline std::size_t save_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw IoError("save_wav: sample_rate=" + std::to_string(w.sample_rate) + " (need 16000)");
  }
  std::size_t clipped = 0;
  const auto codes = quantize_pcm16(w.samples, &clipped);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(codes.size() * 2);
  std::string b;
  b.reserve(44 + data_bytes);
  b += "RIFF";
  detail::put_u32(b, 36 + data_bytes);
  b += "WAVE";
  b += "fmt ";
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, kSampleRate);
  detail::put_u32(b, kSampleRate * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b += "data";
  detail::put_u32(b, data_bytes);
  for (auto c : codes) detail::put_u16(b, static_cast<std::uint16_t>(c));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_wav: cannot open " + path.string() + " for writing");
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("save_wav: write failed for " + path.string());
  return clipped;
}

// Rejects anything other than mono 16-bit PCM at 16 kHz; no resampling.
inline Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_wav: cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = "load_wav(" + path.string() + "): ";
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IoError(where + "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t len = detail::get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) throw IoError(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw IoError(where + "short fmt chunk");
      format = detail::get_u16(buf.data() + body);
      channels = detail::get_u16(buf.data() + body + 2);
      rate = detail::get_u32(buf.data() + body + 4);
      bits = detail::get_u16(buf.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw IoError(where + "data chunk before fmt chunk");
      if (format != 1) throw IoError(where + "audio_format=" + std::to_string(format) + " (need PCM=1)");
      if (channels != 1) throw IoError(where + "channels=" + std::to_string(channels) + " (need mono)");
      if (rate != kSampleRate) throw IoError(where + "sample_rate=" + std::to_string(rate) + " (need 16000)");
      if (bits != 16) throw IoError(where + "bits_per_sample=" + std::to_string(bits) + " (need 16)");
      Waveform w;
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto code = static_cast<std::int16_t>(detail::get_u16(buf.data() + body + 2 * i));
        w.samples[i] = static_cast<float>(code) / 32768.0f;
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw IoError(where + "no data chunk");
}

}  // namespace ew2v::audio
