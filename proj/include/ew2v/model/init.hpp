// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ew2v/numerics/rng.hpp"
#include "ew2v/numerics/tape.hpp"

namespace ew2v::model {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, RngStream& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> constant_tensor(Shape shape, double value) {
  return Tensor<T>(std::move(shape), static_cast<T>(value));
}

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

template <typename T>
void append(ParamRefs<T>& dst, std::vector<Parameter<T>>& src) {
  for (auto& p : src) dst.push_back(&p);
}

}  // namespace ew2v::model
