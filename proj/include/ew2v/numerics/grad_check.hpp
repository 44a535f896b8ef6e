// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ew2v/numerics/tape.hpp"

namespace ew2v {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  // "name[i]" for every coordinate whose analytic or numeric value is not finite.
  std::vector<std::string> non_finite;

  bool passed(double tolerance) const { return non_finite.empty() && max_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Upper bound on checked coordinates per parameter (evenly strided); 0 = all.
  std::size_t max_coords_per_param = 0;
};

// Compares the tape gradient of `loss_fn` against central finite differences.
// loss_fn(Tape<double>&) must rebuild the same function on every call, which
// means any randomness inside it has to be re-seeded per call. Parameter
// gradients are zeroed on entry and hold the analytic gradient on return.
template <typename LossFn>
GradCheckResult grad_check(const std::vector<Parameter<double>*>& params, LossFn&& loss_fn,
                           const GradCheckOptions& opt = {}) {
  if (!(opt.epsilon >= 1e-6 && opt.epsilon <= 1e-3)) {
    throw Error("grad_check: epsilon must lie in [1e-6, 1e-3]");
  }
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape<double> tape;
    return loss_fn(tape).value().item();
  };

  GradCheckResult res;
  const double eps = opt.epsilon;
  for (auto* p : params) {
    if (p->frozen) continue;
    const std::size_t n = p->numel();
    std::size_t step = 1;
    if (opt.max_coords_per_param && n > opt.max_coords_per_param) {
      step = (n + opt.max_coords_per_param - 1) / opt.max_coords_per_param;
    }
    for (std::size_t i = 0; i < n; i += step) {
      double& v = p->value[i];
      const double saved = v;
      v = saved + eps;
      const double fp = eval();
      v = saved - eps;
      const double fm = eval();
      v = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = p->grad[i];
      ++res.coordinates;
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        res.non_finite.push_back(p->name + "[" + std::to_string(i) + "]");
        continue;
      }
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_parameter = p->name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace ew2v
