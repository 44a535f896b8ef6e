// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Differentiable operations on Tape<T>. Matrices are row-major [rows, cols];
// sequences are time-major [frames, channels].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "ew2v/numerics/tape.hpp"

namespace ew2v::ops {

namespace detail {

// Eight interleaved partial sums, combined pairwise; the fixed order keeps
// results identical across runs while letting the compiler vectorize.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void require_matrix(const Shape& s, const char* op) { require_rank(s, 2, op); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        if (ga) {
          auto& d = t.grad(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
        }
        if (gb) {
          auto& d = t.grad(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
        }
      },
      a, b);
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        if (ga) {
          auto& d = t.grad(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
        }
        if (gb) {
          auto& d = t.grad(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] -= g[i];
        }
      },
      a, b);
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv2 = t.value(ib);
        if (ga) {
          auto& d = t.grad(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] * bv2[i];
        }
        if (gb) {
          auto& d = t.grad(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] * av[i];
        }
      },
      a, b);
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= s;
  const auto ia = a.id();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += s * g[i];
      },
      a);
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
      },
      a);
}

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a.value();
  Tensor<T> deriv(out.shape());
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  T* o = out.ptr();
  T* d = deriv.ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T x = o[i];
    const T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
    d[i] = cdf + x * kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
    o[i] = x * cdf;
  }
  const auto ia = a.id();
  return a.tape().record(
      std::move(out),
      [=, deriv = std::move(deriv)](Tape<T>& t, const Tensor<T>& g) {
        auto& dx = t.grad(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * deriv[i];
      },
      a);
}

// Passes `hard` forward and routes the gradient to `soft` unchanged.
template <typename T>
Var<T> straight_through(Tensor<T> hard, const Var<T>& soft) {
  require_same_shape(hard.shape(), soft.shape(), "straight_through");
  const auto is = soft.id();
  return soft.tape().record(
      std::move(hard),
      [=](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(is);
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
      },
      soft);
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T v : a.value().data()) s += v;
  const auto ia = a.id();
  return a.tape().record(
      Tensor<T>::scalar(s),
      [=](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(ia);
        for (auto& v : d.storage()) v += g[0];
      },
      a);
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

// (1/n) * sum of squares over all entries of all inputs.
template <typename T>
Var<T> mean_square(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("mean_square: no inputs");
  // Per-input partial sums, so k identical inputs give exactly k times one.
  std::size_t n = 0;
  T s = T(0);
  for (const auto& x : xs) {
    n += x.value().numel();
    T part = T(0);
    for (T v : x.value().data()) part += v * v;
    s += part;
  }
  if (n == 0) throw ShapeError("mean_square: empty inputs");
  std::vector<std::size_t> ids;
  for (const auto& x : xs) ids.push_back(x.id());
  const T inv = T(1) / static_cast<T>(n);
  return xs.front().tape().record_many(
      Tensor<T>::scalar(s * inv),
      [=](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t id : ids) {
          if (!t.requires_grad(id)) continue;
          const auto& x = t.value(id);
          auto& d = t.grad(id);
          for (std::size_t i = 0; i < x.numel(); ++i) d[i] += g[0] * T(2) * inv * x[i];
        }
      },
      xs);
}

// Column means of a [R, C] matrix -> [1, C].
template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  detail::require_matrix(a.shape(), "mean_rows");
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  if (R == 0) throw ShapeError("mean_rows: no rows");
  Tensor<T> out(Shape{1, C});
  for (std::size_t r = 0; r < R; ++r) detail::axpy(T(1), a.value().ptr() + r * C, out.ptr(), C);
  const T inv = T(1) / static_cast<T>(R);
  for (auto& v : out.storage()) v *= inv;
  const auto ia = a.id();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(ia);
        for (std::size_t r = 0; r < R; ++r) detail::axpy(inv, g.ptr(), d.ptr() + r * C, C);
      },
      a);
}

// Weighted sum of scalars.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<T>& w) {
  if (xs.size() != w.size() || xs.empty()) throw ShapeError("weighted_sum: size mismatch");
  T s = T(0);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s += w[i] * xs[i].value().item();
    ids.push_back(xs[i].id());
  }
  return xs.front().tape().record_many(
      Tensor<T>::scalar(s),
      [=](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (t.requires_grad(ids[i])) t.grad(ids[i])[0] += w[i] * g[0];
        }
      },
      xs);
}

// sum p*log(p), with 0*log(0) := 0.
template <typename T>
Var<T> plogp_sum(const Var<T>& p) {
  T s = T(0);
  for (T v : p.value().data()) {
    if (v < T(0)) throw Error("plogp_sum: negative probability");
    if (v > T(0)) s += v * std::log(v);
  }
  const auto ip = p.id();
  return p.tape().record(
      Tensor<T>::scalar(s),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& x = t.value(ip);
        auto& d = t.grad(ip);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          if (x[i] > T(0)) d[i] += g[0] * (std::log(x[i]) + T(1));
        }
      },
      p);
}

// ---------------------------------------------------------------------------
// Linear algebra

// [m,k] x [k,n] -> [m,n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a.shape(), "matmul");
  detail::require_matrix(b.shape(), "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  const T* A = a.value().ptr();
  const T* B = b.value().ptr();
  T* C = out.ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) detail::axpy(A[i * k + p], B + p * n, C + i * n, n);
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const T* Av = t.value(ia).ptr();
        const T* Bv = t.value(ib).ptr();
        const T* G = g.ptr();
        if (ga) {
          T* dA = t.grad(ia).ptr();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += detail::dot(G + i * n, Bv + p * n, n);
        }
        if (gb) {
          T* dB = t.grad(ib).ptr();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) detail::axpy(Av[i * k + p], G + i * n, dB + p * n, n);
        }
      },
      a, b);
}

// [m,k] x [n,k]^T -> [m,n]
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a.shape(), "matmul_nt");
  detail::require_matrix(b.shape(), "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_nt: shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  Tensor<T> out(Shape{m, n});
  const T* A = a.value().ptr();
  const T* B = b.value().ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.ptr()[i * n + j] = detail::dot(A + i * k, B + j * k, k);
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const T* Av = t.value(ia).ptr();
        const T* Bv = t.value(ib).ptr();
        const T* G = g.ptr();
        if (ga) {
          T* dA = t.grad(ia).ptr();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) detail::axpy(G[i * n + j], Bv + j * k, dA + i * k, k);
        }
        if (gb) {
          T* dB = t.grad(ib).ptr();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) detail::axpy(G[i * n + j], Av + i * k, dB + j * k, k);
        }
      },
      a, b);
}

// x [R, in] * W[out, in]^T + b[out] -> [R, out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::require_matrix(x.shape(), "linear");
  detail::require_matrix(w.shape(), "linear");
  const std::size_t R = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  if (w.shape()[1] != in || b.value().numel() != out_dim) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()) + " / bias " + shape_str(b.shape()));
  }
  Tensor<T> out(Shape{R, out_dim});
  const T* X = x.value().ptr();
  const T* W = w.value().ptr();
  const T* B = b.value().ptr();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t o = 0; o < out_dim; ++o)
      out.ptr()[r * out_dim + o] = B[o] + detail::dot(X + r * in, W + o * in, in);
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  const bool gx = x.requires_grad(), gw = w.requires_grad(), gbias = b.requires_grad();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const T* Xv = t.value(ix).ptr();
        const T* Wv = t.value(iw).ptr();
        const T* G = g.ptr();
        if (gx) {
          T* dX = t.grad(ix).ptr();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) detail::axpy(G[r * out_dim + o], Wv + o * in, dX + r * in, in);
        }
        if (gw) {
          T* dW = t.grad(iw).ptr();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) detail::axpy(G[r * out_dim + o], Xv + r * in, dW + o * in, in);
        }
        if (gbias) {
          T* dB = t.grad(ib).ptr();
          for (std::size_t r = 0; r < R; ++r) detail::axpy(T(1), G + r * out_dim, dB, out_dim);
        }
      },
      x, w, b);
}

// Valid 1-D convolution, time-major. x [L, Cin], w [Cout, k, Cin] -> [L_out, Cout]
// with L_out = floor((L - k) / stride) + 1. The window of output frame t is
// the contiguous block x[t*stride .. t*stride+k), so each output is one dot.
inline std::size_t conv_out_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ShapeError("conv1d: kernel and stride must be positive");
  if (length < kernel) {
    throw ShapeError("conv1d: input length " + std::to_string(length) + " shorter than kernel " +
                     std::to_string(kernel));
  }
  return (length - kernel) / stride + 1;
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, std::size_t stride) {
  detail::require_matrix(x.shape(), "conv1d");
  require_rank(w.shape(), 3, "conv1d");
  const std::size_t L = x.shape()[0], cin = x.shape()[1];
  const std::size_t cout = w.shape()[0], k = w.shape()[1];
  if (w.shape()[2] != cin) {
    throw ShapeError("conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  const std::size_t lout = conv_out_length(L, k, stride);
  const std::size_t win = k * cin;
  Tensor<T> out(Shape{lout, cout});
  const T* X = x.value().ptr();
  const T* W = w.value().ptr();
  for (std::size_t t = 0; t < lout; ++t) {
    const T* xw = X + t * stride * cin;
    T* o = out.ptr() + t * cout;
    for (std::size_t c = 0; c < cout; ++c) o[c] = detail::dot(xw, W + c * win, win);
  }
  const auto ix = x.id(), iw = w.id();
  const bool gx = x.requires_grad(), gw = w.requires_grad();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& tp, const Tensor<T>& g) {
        const T* Xv = tp.value(ix).ptr();
        const T* Wv = tp.value(iw).ptr();
        T* dX = gx ? tp.grad(ix).ptr() : nullptr;
        T* dW = gw ? tp.grad(iw).ptr() : nullptr;
        for (std::size_t t = 0; t < lout; ++t) {
          const T* gt = g.ptr() + t * cout;
          const std::size_t off = t * stride * cin;
          for (std::size_t c = 0; c < cout; ++c) {
            if (gt[c] == T(0)) continue;
            if (dW) detail::axpy(gt[c], Xv + off, dW + c * win, win);
            if (dX) detail::axpy(gt[c], Wv + c * win, dX + off, win);
          }
        }
      },
      x, w);
}

// Grouped convolution with zero padding that preserves length (odd kernel).
// x [T, D], w [D, k, D/groups], b [D] -> [T, D].
template <typename T>
Var<T> grouped_conv1d_same(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t groups) {
  detail::require_matrix(x.shape(), "grouped_conv1d_same");
  require_rank(w.shape(), 3, "grouped_conv1d_same");
  const std::size_t L = x.shape()[0], D = x.shape()[1];
  const std::size_t k = w.shape()[1];
  if (groups == 0 || D % groups != 0 || w.shape()[0] != D || w.shape()[2] != D / groups ||
      b.value().numel() != D || k % 2 == 0) {
    throw ShapeError("grouped_conv1d_same: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()) + ", groups " + std::to_string(groups));
  }
  const std::size_t dg = D / groups;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> out(Shape{L, D});
  const T* X = x.value().ptr();
  const T* W = w.value().ptr();
  const T* B = b.value().ptr();
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t o = 0; o < D; ++o) {
      const std::size_t g0 = (o / dg) * dg;
      T s = B[o];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        s += detail::dot(X + static_cast<std::size_t>(src) * D + g0, W + (o * k + j) * dg, dg);
      }
      out.ptr()[t * D + o] = s;
    }
  }
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  const bool gx = x.requires_grad(), gw = w.requires_grad(), gbias = b.requires_grad();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& tp, const Tensor<T>& g) {
        const T* Xv = tp.value(ix).ptr();
        const T* Wv = tp.value(iw).ptr();
        T* dX = gx ? tp.grad(ix).ptr() : nullptr;
        T* dW = gw ? tp.grad(iw).ptr() : nullptr;
        T* dB = gbias ? tp.grad(ib).ptr() : nullptr;
        for (std::size_t t = 0; t < L; ++t) {
          for (std::size_t o = 0; o < D; ++o) {
            const T go = g.ptr()[t * D + o];
            if (dB) dB[o] += go;
            const std::size_t g0 = (o / dg) * dg;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - pad;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
              const std::size_t xo = static_cast<std::size_t>(src) * D + g0;
              if (dW) detail::axpy(go, Xv + xo, dW + (o * k + j) * dg, dg);
              if (dX) detail::axpy(go, Wv + (o * k + j) * dg, dX + xo, dg);
            }
          }
        }
      },
      x, w, b);
}

// ---------------------------------------------------------------------------
// Normalization and softmax

// Per-row layer normalization with gain/bias over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  detail::require_matrix(x.shape(), "layer_norm");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  if (gain.value().numel() != C || bias.value().numel() != C) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " incompatible with gain " +
                     shape_str(gain.shape()));
  }
  Tensor<T> out(Shape{R, C});
  Tensor<T> xhat(Shape{R, C});
  std::vector<T> inv_std(R);
  const T* X = x.value().ptr();
  const T* Gm = gain.value().ptr();
  const T* Bt = bias.value().ptr();
  for (std::size_t r = 0; r < R; ++r) {
    const T* row = X + r * C;
    T mu = T(0);
    for (std::size_t c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<T>(C);
    T var = T(0);
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (row[c] - mu) * is;
      xhat.ptr()[r * C + c] = h;
      out.ptr()[r * C + c] = h * Gm[c] + Bt[c];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool gx = x.requires_grad(), gg = gain.requires_grad(), gbias = bias.requires_grad();
  return x.tape().record(
      std::move(out),
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, const Tensor<T>& g) {
        const T* Gv = t.value(ig).ptr();
        const T* G = g.ptr();
        T* dG = gg ? t.grad(ig).ptr() : nullptr;
        T* dBias = gbias ? t.grad(ib).ptr() : nullptr;
        T* dX = gx ? t.grad(ix).ptr() : nullptr;
        std::vector<T> dh(C);
        for (std::size_t r = 0; r < R; ++r) {
          const T* h = xhat.ptr() + r * C;
          const T* gr = G + r * C;
          T mean_dh = T(0), mean_dh_h = T(0);
          for (std::size_t c = 0; c < C; ++c) {
            if (dG) dG[c] += gr[c] * h[c];
            if (dBias) dBias[c] += gr[c];
            dh[c] = gr[c] * Gv[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * h[c];
          }
          if (!dX) continue;
          mean_dh /= static_cast<T>(C);
          mean_dh_h /= static_cast<T>(C);
          for (std::size_t c = 0; c < C; ++c)
            dX[r * C + c] += inv_std[r] * (dh[c] - mean_dh - h[c] * mean_dh_h);
        }
      },
      x, gain, bias);
}

template <typename T>
void softmax_inplace(std::span<T> row) {
  const T mx = *std::max_element(row.begin(), row.end());
  T s = T(0);
  for (auto& v : row) {
    v = std::exp(v - mx);
    s += v;
  }
  for (auto& v : row) v /= s;
}

// Softmax over the last axis.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  Tensor<T> out = x.value();
  const std::size_t R = out.rows(), C = out.cols();
  for (std::size_t r = 0; r < R; ++r) softmax_inplace(out.row(r));
  const auto ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& y = t.value(self);
        auto& d = t.grad(ix);
        for (std::size_t r = 0; r < R; ++r) {
          const T* yr = y.ptr() + r * C;
          const T* gr = g.ptr() + r * C;
          const T s = detail::dot(yr, gr, C);
          for (std::size_t c = 0; c < C; ++c) d.ptr()[r * C + c] += yr[c] * (gr[c] - s);
        }
      },
      x);
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& x) {
  Tensor<T> out = x.value();
  const std::size_t R = out.rows(), C = out.cols();
  for (std::size_t r = 0; r < R; ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T s = T(0);
    for (T v : row) s += std::exp(v - mx);
    const T lse = mx + std::log(s);
    for (auto& v : row) v -= lse;
  }
  const auto ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& y = t.value(self);
        auto& d = t.grad(ix);
        for (std::size_t r = 0; r < R; ++r) {
          const T* yr = y.ptr() + r * C;
          const T* gr = g.ptr() + r * C;
          T s = T(0);
          for (std::size_t c = 0; c < C; ++c) s += gr[c];
          for (std::size_t c = 0; c < C; ++c) d.ptr()[r * C + c] += gr[c] - std::exp(yr[c]) * s;
        }
      },
      x);
}

// Mean over rows of -log softmax(row)[target[row]].
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<std::size_t>& targets) {
  detail::require_matrix(logits.shape(), "cross_entropy_rows");
  const std::size_t R = logits.shape()[0], C = logits.shape()[1];
  if (targets.size() != R || R == 0) throw ShapeError("cross_entropy_rows: target count mismatch");
  Tensor<T> probs = logits.value();
  T loss = T(0);
  for (std::size_t r = 0; r < R; ++r) {
    auto row = probs.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T s = T(0);
    for (T v : row) s += std::exp(v - mx);
    loss += mx + std::log(s) - row[targets[r]];
    softmax_inplace(row);
  }
  const T inv = T(1) / static_cast<T>(R);
  const auto il = logits.id();
  return logits.tape().record(
      Tensor<T>::scalar(loss * inv),
      [=, probs = std::move(probs)](Tape<T>& t, const Tensor<T>& g) {
        auto& d = t.grad(il);
        const T s = g[0] * inv;
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t c = 0; c < C; ++c) {
            d.ptr()[r * C + c] += s * (probs.ptr()[r * C + c] - (c == targets[r] ? T(1) : T(0)));
          }
        }
      },
      logits);
}

// Rows scaled to unit L2 norm; a zero row is rejected with its index.
template <typename T>
Var<T> normalize_rows(const Var<T>& x, const char* what = "normalize_rows") {
  detail::require_matrix(x.shape(), "normalize_rows");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  Tensor<T> out = x.value();
  std::vector<T> norms(R);
  for (std::size_t r = 0; r < R; ++r) {
    const T n = std::sqrt(detail::dot(out.ptr() + r * C, out.ptr() + r * C, C));
    if (!(n > T(0))) {
      throw Error(std::string(what) + ": zero-norm vector at frame " + std::to_string(r));
    }
    norms[r] = n;
    for (std::size_t c = 0; c < C; ++c) out.ptr()[r * C + c] /= n;
  }
  const auto ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().record(
      std::move(out),
      [=, norms = std::move(norms)](Tape<T>& t, const Tensor<T>& g) {
        const auto& y = t.value(self);
        auto& d = t.grad(ix);
        for (std::size_t r = 0; r < R; ++r) {
          const T* yr = y.ptr() + r * C;
          const T* gr = g.ptr() + r * C;
          const T s = detail::dot(yr, gr, C);
          for (std::size_t c = 0; c < C; ++c) d.ptr()[r * C + c] += (gr[c] - yr[c] * s) / norms[r];
        }
      },
      x);
}

// Euclidean norm of each row -> [R]. The gradient at a zero row is taken as 0.
template <typename T>
Var<T> row_norms(const Var<T>& x) {
  detail::require_matrix(x.shape(), "row_norms");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  Tensor<T> out(Shape{R});
  for (std::size_t r = 0; r < R; ++r) {
    const T* xr = x.value().ptr() + r * C;
    out[r] = std::sqrt(detail::dot(xr, xr, C));
  }
  const auto ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& n = t.value(self);
        const T* X = t.value(ix).ptr();
        auto& d = t.grad(ix);
        for (std::size_t r = 0; r < R; ++r) {
          if (!(n[r] > T(0))) continue;
          detail::axpy(g[r] / n[r], X + r * C, d.ptr() + r * C, C);
        }
      },
      x);
}

// out[i, j] = <a[i], b[index[i*width + j]]>; a [n, D], b [m, D] -> [n, width].
template <typename T>
Var<T> gathered_row_dots(const Var<T>& a, const Var<T>& b, const std::vector<std::size_t>& index,
                         std::size_t width) {
  detail::require_matrix(a.shape(), "gathered_row_dots");
  detail::require_matrix(b.shape(), "gathered_row_dots");
  const std::size_t n = a.shape()[0], D = a.shape()[1], m = b.shape()[0];
  if (b.shape()[1] != D) {
    throw ShapeError("gathered_row_dots: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  if (index.size() != n * width) throw ShapeError("gathered_row_dots: index table size mismatch");
  for (std::size_t v : index)
    if (v >= m) throw ShapeError("gathered_row_dots: index out of range");
  Tensor<T> out(Shape{n, width});
  const T* A = a.value().ptr();
  const T* B = b.value().ptr();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < width; ++j) out.ptr()[i * width + j] = detail::dot(A + i * D, B + index[i * width + j] * D, D);
  const auto ia = a.id(), ib = b.id();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        const T* Av = t.value(ia).ptr();
        const T* Bv = t.value(ib).ptr();
        T* dA = ga ? t.grad(ia).ptr() : nullptr;
        T* dB = gb ? t.grad(ib).ptr() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < width; ++j) {
            const T gij = g.ptr()[i * width + j];
            const std::size_t bj = index[i * width + j];
            if (dA) detail::axpy(gij, Bv + bj * D, dA + i * D, D);
            if (dB) detail::axpy(gij, Av + i * D, dB + bj * D, D);
          }
        }
      },
      a, b);
}

// ---------------------------------------------------------------------------
// Indexing and layout

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t start, std::size_t count) {
  detail::require_matrix(x.shape(), "slice_rows");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  if (start + count > R) throw ShapeError("slice_rows: range exceeds " + shape_str(x.shape()));
  Tensor<T> out(Shape{count, C});
  std::copy_n(x.value().ptr() + start * C, count * C, out.ptr());
  const auto ix = x.id();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        detail::axpy(T(1), g.ptr(), t.grad(ix).ptr() + start * C, count * C);
      },
      x);
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t start, std::size_t count) {
  detail::require_matrix(x.shape(), "slice_cols");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  if (start + count > C) throw ShapeError("slice_cols: range exceeds " + shape_str(x.shape()));
  Tensor<T> out(Shape{R, count});
  for (std::size_t r = 0; r < R; ++r) std::copy_n(x.value().ptr() + r * C + start, count, out.ptr() + r * count);
  const auto ix = x.id();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        T* d = t.grad(ix).ptr();
        for (std::size_t r = 0; r < R; ++r) detail::axpy(T(1), g.ptr() + r * count, d + r * C + start, count);
      },
      x);
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t C = xs.front().shape().at(1);
  std::size_t R = 0;
  for (const auto& x : xs) {
    detail::require_matrix(x.shape(), "concat_rows");
    if (x.shape()[1] != C) {
      throw ShapeError("concat_rows: shape mismatch " + shape_str(xs.front().shape()) + " vs " +
                       shape_str(x.shape()));
    }
    R += x.shape()[0];
  }
  Tensor<T> out(Shape{R, C});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy_n(x.value().ptr(), x.value().numel(), out.ptr() + off * C);
    ids.push_back(x.id());
    offsets.push_back(off);
    off += x.shape()[0];
  }
  return xs.front().tape().record_many(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.requires_grad(ids[i])) continue;
          auto& d = t.grad(ids[i]);
          detail::axpy(T(1), g.ptr() + offsets[i] * C, d.ptr(), d.numel());
        }
      },
      xs);
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t R = xs.front().shape().at(0);
  std::size_t C = 0;
  for (const auto& x : xs) {
    detail::require_matrix(x.shape(), "concat_cols");
    if (x.shape()[0] != R) {
      throw ShapeError("concat_cols: shape mismatch " + shape_str(xs.front().shape()) + " vs " +
                       shape_str(x.shape()));
    }
    C += x.shape()[1];
  }
  Tensor<T> out(Shape{R, C});
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t off = 0;
  for (const auto& x : xs) {
    const std::size_t w = x.shape()[1];
    for (std::size_t r = 0; r < R; ++r) std::copy_n(x.value().ptr() + r * w, w, out.ptr() + r * C + off);
    ids.push_back(x.id());
    offsets.push_back(off);
    widths.push_back(w);
    off += w;
  }
  return xs.front().tape().record_many(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.requires_grad(ids[i])) continue;
          T* d = t.grad(ids[i]).ptr();
          const std::size_t w = widths[i];
          for (std::size_t r = 0; r < R; ++r) detail::axpy(T(1), g.ptr() + r * C + offsets[i], d + r * w, w);
        }
      },
      xs);
}

// Rows selected by index (repeats allowed); backward scatters.
template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index) {
  detail::require_matrix(x.shape(), "gather_rows");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  Tensor<T> out(Shape{index.size(), C});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= R) throw ShapeError("gather_rows: index out of range for " + shape_str(x.shape()));
    std::copy_n(x.value().ptr() + index[i] * C, C, out.ptr() + i * C);
  }
  const auto ix = x.id();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        T* d = t.grad(ix).ptr();
        for (std::size_t i = 0; i < index.size(); ++i) detail::axpy(T(1), g.ptr() + i * C, d + index[i] * C, C);
      },
      x);
}

// Rows with mask[r] set are replaced by `row` ([C] or [1, C]).
template <typename T>
Var<T> replace_rows(const Var<T>& x, const std::vector<bool>& mask, const Var<T>& row) {
  detail::require_matrix(x.shape(), "replace_rows");
  const std::size_t R = x.shape()[0], C = x.shape()[1];
  if (mask.size() != R) {
    throw ShapeError("replace_rows: mask length " + std::to_string(mask.size()) + " vs " +
                     std::to_string(R) + " rows");
  }
  if (row.value().numel() != C) {
    throw ShapeError("replace_rows: row shape " + shape_str(row.shape()) + " vs " + shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < R; ++r)
    if (mask[r]) std::copy_n(row.value().ptr(), C, out.ptr() + r * C);
  const auto ix = x.id(), ie = row.id();
  const bool gx = x.requires_grad(), ge = row.requires_grad();
  return x.tape().record(
      std::move(out),
      [=](Tape<T>& t, const Tensor<T>& g) {
        T* dX = gx ? t.grad(ix).ptr() : nullptr;
        T* dE = ge ? t.grad(ie).ptr() : nullptr;
        for (std::size_t r = 0; r < R; ++r) {
          if (mask[r]) {
            if (dE) detail::axpy(T(1), g.ptr() + r * C, dE, C);
          } else if (dX) {
            detail::axpy(T(1), g.ptr() + r * C, dX + r * C, C);
          }
        }
      },
      x, row);
}

}  // namespace ew2v::ops
