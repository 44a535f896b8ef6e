// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ew2v/training/config.hpp"

namespace ew2v::training {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

// File layout: 8-byte magic, uint64 little-endian header length, UTF-8 JSON
// header, then every parameter as contiguous float32 little-endian values at
// the byte offsets listed in the header.
inline constexpr char kCheckpointMagic[8] = {'E', 'W', '2', 'V', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::string kind = "pretrain";  // pretrain | finetune
  std::string mode = "enhanced";  // enhanced | baseline | none
  std::uint64_t step = 0;
  std::map<std::string, std::uint64_t> rng_counters;
  model::Wav2VecModel<float> model;
};

inline json checkpoint_header(const Checkpoint& ck, model::Wav2VecModel<float>& m) {
  json params = json::array();
  std::uint64_t offset = 0;
  for (auto* p : m.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"numel", p->numel()}});
    offset += p->numel() * sizeof(float);
  }
  json h = {
      {"format", "ew2v-checkpoint"},
      {"version", kCheckpointVersion},
      {"kind", ck.kind},
      {"mode", ck.mode},
      {"step", ck.step},
      {"rng", {{"seed", ck.config.seed}, {"counters", ck.rng_counters}}},
      {"config", to_json(ck.config)},
      {"has_quantizer", m.has_quantizer()},
      {"has_head", m.has_head()},
      {"parameters", params},
      {"payload_bytes", offset},
  };
  if (m.has_head()) h["head_vocab"] = m.head().weight.value.dim(0);
  return h;
}

inline void save_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
  const std::string header = checkpoint_header(ck, ck.model).dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_checkpoint: cannot open '" + path.string() + "' for writing");
  f.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto* p : ck.model.parameters()) {
    const auto d = p->value.data();
    f.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
  }
  if (!f) throw IoError("save_checkpoint: write to '" + path.string() + "' failed");
}

// Reads only the JSON header.
inline json read_checkpoint_header(const std::filesystem::path& path, std::uint64_t* payload_start = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open '" + path.string() + "'");
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw IoError("load_checkpoint: '" + path.string() + "' is not an ew2v checkpoint");
  }
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  const auto size = std::filesystem::file_size(path);
  if (!f || hlen > size - 16) throw IoError("load_checkpoint: truncated header in '" + path.string() + "'");
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (payload_start) *payload_start = 16 + hlen;
  try {
    return json::parse(header);
  } catch (const json::parse_error& e) {
    throw IoError("load_checkpoint: malformed header: " + std::string(e.what()));
  }
}

// Rebuilds the model from the stored configuration and fills every
// parameter by name; a parameter absent from the file is an error naming it.
inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::uint64_t start = 0;
  const json h = read_checkpoint_header(path, &start);
  if (h.value("version", 0) != kCheckpointVersion) throw IoError("load_checkpoint: unsupported version");
  Checkpoint ck;
  ck.config = parse_config(h.at("config"));
  ck.kind = h.at("kind").get<std::string>();
  ck.mode = h.at("mode").get<std::string>();
  ck.step = h.at("step").get<std::uint64_t>();
  ck.rng_counters = h.at("rng").at("counters").get<std::map<std::string, std::uint64_t>>();
  const std::uint64_t payload = h.at("payload_bytes").get<std::uint64_t>();
  if (std::filesystem::file_size(path) != start + payload) {
    throw IoError("load_checkpoint: payload of '" + path.string() + "' does not match its header (" +
                  std::to_string(payload) + " bytes declared)");
  }

  ck.model = model::Wav2VecModel<float>(ck.config.model, ck.config.seed);
  if (!h.at("has_quantizer").get<bool>()) ck.model.drop_quantizer();
  if (h.at("has_head").get<bool>()) ck.model.add_head(h.at("head_vocab").get<std::size_t>());

  std::map<std::string, json> index;
  for (const auto& e : h.at("parameters")) index[e.at("name").get<std::string>()] = e;
  std::ifstream f(path, std::ios::binary);
  for (auto* p : ck.model.parameters()) {
    auto it = index.find(p->name);
    if (it == index.end()) throw IoError("load_checkpoint: missing parameter '" + p->name + "'");
    const Shape shape = it->second.at("shape").get<Shape>();
    if (shape != p->value.shape()) {
      throw ShapeError("load_checkpoint: parameter '" + p->name + "' has shape " + shape_str(shape) + ", model expects " +
                       shape_str(p->value.shape()));
    }
    const std::uint64_t off = it->second.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = p->numel() * sizeof(float);
    if (off + bytes > payload) throw IoError("load_checkpoint: parameter '" + p->name + "' lies outside the payload");
    f.seekg(static_cast<std::streamoff>(start + off));
    f.read(reinterpret_cast<char*>(p->value.ptr()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("load_checkpoint: short read for '" + p->name + "'");
    p->grad = Tensor<float>(p->value.shape());
    index.erase(it);
  }
  if (!index.empty()) throw IoError("load_checkpoint: unexpected parameter '" + index.begin()->first + "'");
  return ck;
}

}  // namespace ew2v::training
