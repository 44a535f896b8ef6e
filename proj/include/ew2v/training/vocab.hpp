// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ew2v::training {

// 30 output symbols: blank (0), A-Z (1-26), space (27), apostrophe (28),
// unknown (29).
struct CharVocab {
  static constexpr std::size_t kSize = 30;
  static constexpr int kBlank = 0;
  static constexpr int kSpace = 27;
  static constexpr int kApostrophe = 28;
  static constexpr int kUnknown = 29;

  static constexpr std::size_t size() { return kSize; }

  static int id(char c) {
    if (c >= 'A' && c <= 'Z') return 1 + (c - 'A');
    if (c == ' ') return kSpace;
    if (c == '\'') return kApostrophe;
    return kUnknown;
  }

  // Printable form; blank maps to nothing and unknown to '?'.
  static std::string symbol(int id) {
    if (id >= 1 && id <= 26) return std::string(1, static_cast<char>('A' + id - 1));
    if (id == kSpace) return " ";
    if (id == kApostrophe) return "'";
    if (id == kUnknown) return "?";
    return "";
  }

  static std::vector<int> encode(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(id(c));
    return ids;
  }

  static std::string decode(const std::vector<int>& ids) {
    std::string s;
    for (int i : ids) s += symbol(i);
    return s;
  }
};

}  // namespace ew2v::training
