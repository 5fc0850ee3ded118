// SPDX-License-Identifier: Apache-2.0

#include "velopick/ag/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "velopick/core/errors.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/core/resample.hpp"
#include "velopick/simd/kernels.hpp"

namespace velopick::ag {
namespace {

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected NCHW input, got " + to_string(s));
}

struct ConvGeometry {
  std::size_t channels, in_h, in_w, kh, kw, sh, sw, ph, pw, out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// Output columns ox whose input column ox*sw - pw + j lies inside [0, in_w).
inline void valid_range(const ConvGeometry& g, std::size_t j, std::size_t& lo, std::size_t& hi) {
  // smallest ox with ox*sw + j >= pw
  lo = j >= g.pw ? 0 : (g.pw - j + g.sw - 1) / g.sw;
  // ox*sw + j - pw <= in_w - 1
  const std::size_t limit = g.in_w - 1 + g.pw;
  hi = limit >= j ? std::min(g.out_w, (limit - j) / g.sw + 1) : 0;
  lo = std::min(lo, hi);
}

// col[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*sh - ph + i][ox*sw - pw + j]
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        std::size_t lo, hi;
        valid_range(g, j, lo, hi);
        T* dst = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          T* row = dst + oy * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          const auto off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
          std::fill(row, row + lo, T(0));
          if (g.sw == 1) {
            if (hi > lo) std::copy_n(src + (static_cast<std::ptrdiff_t>(lo) + off), hi - lo, row + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) row[ox] = src[static_cast<std::ptrdiff_t>(ox * g.sw) + off];
          }
          std::fill(row + hi, row + g.out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: x += scatter(col).
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        std::size_t lo, hi;
        valid_range(g, j, lo, hi);
        const T* src = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = x + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          const auto off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
          const T* row = src + oy * g.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox * g.sw) + off] += row[ox];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.ph == 0 && g.pw == 0;
}

template <typename T>
std::vector<T> map_values(const Tensor<T>& x, auto&& f) {
  std::vector<T> out(x.numel());
  auto v = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return out;
}

bool is_same3x3(const ConvGeometry& g) {
  return g.kh == 3 && g.kw == 3 && g.sh == 1 && g.sw == 1 && g.ph == 1 && g.pw == 1;
}

// Copies `planes` h x w planes into zero-bordered (h + 2) x (w + 2) planes.
template <typename T>
std::vector<T> pad_planes(const T* src, std::size_t planes, std::size_t h, std::size_t w) {
  const std::size_t ld = w + 2;
  std::vector<T> out(planes * (h + 2) * ld, T(0));
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(src + (p * h + r) * w, w, out.data() + (p * (h + 2) + r + 1) * ld + 1);
  return out;
}

// 3x3, stride 1, pad 1: direct correlation on padded planes instead of
// im2col, which is memory bound at the small channel counts used here.
template <typename T>
Tensor<T> conv3x3_direct(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t n,
                         std::size_t cin, std::size_t cout, std::size_t h, std::size_t w) {
  const std::size_t P = h * w, padded = (h + 2) * (w + 2);
  std::vector<T> out(n * cout * P, T(0));
  const auto xpad = pad_planes(x.value().data(), n * cin, h, w);
  const T* wv = weight.value().data();
  parallel_for(n, [&](std::size_t b) {
    for (std::size_t o = 0; o < cout; ++o) {
      T* ob = out.data() + (b * cout + o) * P;
      if (bias.defined()) std::fill(ob, ob + P, bias.value()[o]);
      for (std::size_t c = 0; c < cin; ++c)
        simd::conv3x3(xpad.data() + (b * cin + c) * padded, w + 2, h, w, wv + (o * cin + c) * 9, ob);
    }
  });
  return Tensor<T>::make_result({n, cout, h, w}, std::move(out), {x, weight, bias}, [=](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (bn && bn->requires_grad)
      for (std::size_t o = 0; o < cout; ++o) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const T* g = self.grad.data() + (b * cout + o) * P;
          for (std::size_t p = 0; p < P; ++p) s += g[p];
        }
        bn->grad[o] += static_cast<T>(s);
      }
    if (xn.requires_grad) {
      // dx = correlation of the padded output gradient with the flipped kernel.
      std::vector<T> flipped(cout * cin * 9);
      for (std::size_t k = 0; k < cout * cin; ++k)
        for (std::size_t t = 0; t < 9; ++t) flipped[k * 9 + t] = wn.value[k * 9 + 8 - t];
      const auto gpad = pad_planes(self.grad.data(), n * cout, h, w);
      parallel_for(n, [&](std::size_t b) {
        for (std::size_t c = 0; c < cin; ++c) {
          T* dx = xn.grad.data() + (b * cin + c) * P;
          for (std::size_t o = 0; o < cout; ++o)
            simd::conv3x3(gpad.data() + (b * cout + o) * padded, w + 2, h, w, flipped.data() + (o * cin + c) * 9, dx);
        }
      });
    }
    if (wn.requires_grad) {
      // Per-sample partials summed in sample order keep the result independent
      // of the thread count.
      const auto xpad = pad_planes(xn.value.data(), n * cin, h, w);
      std::vector<T> partial(n * cout * cin * 9, T(0));
      parallel_for(n, [&](std::size_t b) {
        T* dwb = partial.data() + b * cout * cin * 9;
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t c = 0; c < cin; ++c)
            simd::conv3x3_wgrad(xpad.data() + (b * cin + c) * padded, w + 2, h, w,
                                self.grad.data() + (b * cout + o) * P, dwb + (o * cin + c) * 9);
      });
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < cout * cin * 9; ++k) wn.grad[k] += partial[b * cout * cin * 9 + k];
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dSpec& spec) {
  require_rank4(x.shape(), "conv2d");
  require_rank4(weight.shape(), "conv2d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  if (bias.defined() && bias.numel() != cout)
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " vs weight " + to_string(weight.shape()));
  if (spec.stride_h == 0 || spec.stride_w == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (h + 2 * spec.pad_h < kh || w + 2 * spec.pad_w < kw)
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " smaller than kernel " + to_string(weight.shape()));

  const ConvGeometry g{cin, h, w, kh, kw, spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w,
                       (h + 2 * spec.pad_h - kh) / spec.stride_h + 1,
                       (w + 2 * spec.pad_w - kw) / spec.stride_w + 1};
  if (is_same3x3(g) && w >= 24) return conv3x3_direct(x, weight, bias, n, cin, cout, h, w);
  const std::size_t P = g.pixels(), K = g.patch();
  std::vector<T> out(n * cout * P, T(0));
  std::vector<T> col(is_pointwise(g) ? 0 : K * P);
  const T* wv = weight.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    const T* xb = x.value().data() + b * cin * h * w;
    const T* cb = xb;
    if (!is_pointwise(g)) {
      im2col(xb, g, col.data());
      cb = col.data();
    }
    T* ob = out.data() + b * cout * P;
    if (bias.defined())
      for (std::size_t o = 0; o < cout; ++o) std::fill(ob + o * P, ob + (o + 1) * P, bias.value()[o]);
    simd::gemm_nn(cout, P, K, wv, K, cb, P, ob, P);
  }

  return Tensor<T>::make_result(
      {n, cout, g.out_h, g.out_w}, std::move(out), {x, weight, bias}, [g, n, cout](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const std::size_t P = g.pixels(), K = g.patch();
        const std::size_t in_size = g.channels * g.in_h * g.in_w;
        std::vector<T> col(is_pointwise(g) ? 0 : K * P);
        std::vector<T> dcol(K * P);
        for (std::size_t b = 0; b < n; ++b) {
          const T* gb = self.grad.data() + b * cout * P;
          if (bn && bn->requires_grad)
            for (std::size_t o = 0; o < cout; ++o) {
              double s = 0.0;
              for (std::size_t p = 0; p < P; ++p) s += gb[p + o * P];
              bn->grad[o] += static_cast<T>(s);
            }
          if (wn.requires_grad) {
            const T* cb = xn.value.data() + b * in_size;
            if (!is_pointwise(g)) {
              im2col(cb, g, col.data());
              cb = col.data();
            }
            simd::gemm_nt(cout, K, P, gb, P, cb, P, wn.grad.data(), K);
          }
          if (xn.requires_grad) {
            if (is_pointwise(g)) {
              simd::gemm_tn(K, P, cout, wn.value.data(), K, gb, P, xn.grad.data() + b * in_size, P);
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              simd::gemm_tn(K, P, cout, wn.value.data(), K, gb, P, dcol.data(), P);
              col2im(dcol.data(), g, xn.grad.data() + b * in_size);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const Conv2dSpec& spec) {
  require_rank4(x.shape(), "conv_transpose2d");
  require_rank4(weight.shape(), "conv_transpose2d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != cin)
    throw ShapeError("conv_transpose2d: input " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  if (bias.defined() && bias.numel() != cout)
    throw ShapeError("conv_transpose2d: bias " + to_string(bias.shape()) + " vs weight " +
                     to_string(weight.shape()));
  if (spec.stride_h == 0 || spec.stride_w == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const auto oh = static_cast<std::ptrdiff_t>((h - 1) * spec.stride_h + kh) - 2 * static_cast<std::ptrdiff_t>(spec.pad_h);
  const auto ow = static_cast<std::ptrdiff_t>((w - 1) * spec.stride_w + kw) - 2 * static_cast<std::ptrdiff_t>(spec.pad_w);
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: padding removes the whole output");

  // Geometry of the equivalent forward convolution mapping output -> input.
  const ConvGeometry g{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw,
                       spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w, h, w};
  const std::size_t P = g.pixels(), K = g.patch();
  const std::size_t out_size = cout * g.in_h * g.in_w;
  std::vector<T> out(n * out_size, T(0));
  std::vector<T> col(K * P);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(col.begin(), col.end(), T(0));
    simd::gemm_tn(K, P, cin, weight.value().data(), K, x.value().data() + b * cin * P, P, col.data(), P);
    T* ob = out.data() + b * out_size;
    col2im(col.data(), g, ob);
    if (bias.defined())
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t p = 0; p < g.in_h * g.in_w; ++p) ob[o * g.in_h * g.in_w + p] += bias.value()[o];
  }

  return Tensor<T>::make_result(
      {n, cout, g.in_h, g.in_w}, std::move(out), {x, weight, bias}, [g, n, cin](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const std::size_t P = g.pixels(), K = g.patch();
        const std::size_t plane = g.in_h * g.in_w;
        const std::size_t out_size = g.channels * plane;
        std::vector<T> dcol(K * P);
        for (std::size_t b = 0; b < n; ++b) {
          const T* gb = self.grad.data() + b * out_size;
          if (bn && bn->requires_grad)
            for (std::size_t o = 0; o < g.channels; ++o) {
              double s = 0.0;
              for (std::size_t p = 0; p < plane; ++p) s += gb[o * plane + p];
              bn->grad[o] += static_cast<T>(s);
            }
          im2col(gb, g, dcol.data());
          if (xn.requires_grad)
            simd::gemm_nn(cin, P, K, wn.value.data(), K, dcol.data(), P, xn.grad.data() + b * cin * P, P);
          if (wn.requires_grad)
            simd::gemm_nt(cin, K, P, xn.value.data() + b * cin * P, P, dcol.data(), P, wn.grad.data(), K);
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalisation

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, bool training) {
  require_rank4(x.shape(), "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.size() != c ||
      state.running_var.size() != c)
    throw ShapeError("batch_norm: " + std::to_string(c) + " channels in " + to_string(x.shape()) +
                     " but parameters sized " + std::to_string(gamma.numel()));
  const std::size_t count = n * plane;
  const auto xv = x.value();
  std::vector<T> mean(c), inv_std(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s2 += (p[i] - mu) * (p[i] - mu);
      }
      const double var = s2 / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = count > 1 ? s2 / static_cast<double>(count - 1) : var;
      state.running_mean[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * state.running_mean[ch] + kBatchNormMomentum * mu);
      state.running_var[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * state.running_var[ch] + kBatchNormMomentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(double{state.running_var[ch]} + kBatchNormEps));
    }
  }

  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      const T g = gamma.value()[ch], be = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (xv[off + i] - mean[ch]) * inv_std[ch];
        out[off + i] = g * xhat[off + i] + be;
      }
    }

  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane, training](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const double count = static_cast<double>(n * plane);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sdy = 0.0, sdyx = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sdy += self.grad[off + i];
              sdyx += double{self.grad[off + i]} * xhat[off + i];
            }
          }
          if (gn.requires_grad) gn.grad[ch] += static_cast<T>(sdyx);
          if (bn.requires_grad) bn.grad[ch] += static_cast<T>(sdy);
          if (!xn.requires_grad) continue;
          const double scale = double{gn.value[ch]} * inv_std[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double dy = self.grad[off + i];
              const double dx = training ? scale * (dy - sdy / count - xhat[off + i] * sdyx / count)
                                         : scale * dy;
              xn.grad[off + i] += static_cast<T>(dx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Element-wise

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return Tensor<T>::make_result(x.shape(), map_values(x, [slope](T v) { return v >= T(0) ? v : slope * v; }),
                                {x}, [slope](Node<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    xn.grad[i] += xn.value[i] >= T(0) ? self.grad[i] : slope * self.grad[i];
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return Tensor<T>::make_result(x.shape(), map_values(x, [](T v) { return v > T(0) ? v : T(0); }), {x},
                                [](Node<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    if (xn.value[i] > T(0)) xn.grad[i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto out = map_values(x, [](T v) {
    // Split by sign so exp never overflows.
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      xn.grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  return Tensor<T>::make_result(x.shape(), map_values(x, [](T v) { return std::clamp(v, T(0), T(1)); }), {x},
                                [](Node<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    if (xn.value[i] > T(0) && xn.value[i] < T(1)) xn.grad[i] += self.grad[i];
                                });
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
                     std::size_t ph, std::size_t pw) {
  require_rank4(x.shape(), "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kh == 0 || kw == 0 || sh == 0 || sw == 0) throw ShapeError("max_pool2d: kernel and stride must be >= 1");
  if (h + 2 * ph < kh || w + 2 * pw < kw)
    throw ShapeError("max_pool2d: input " + to_string(x.shape()) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  const std::size_t oh = (h + 2 * ph - kh) / sh + 1, ow = (w + 2 * pw - kw) / sw + 1;
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> arg(out.size());
  const auto xv = x.value();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const T* plane = xv.data() + nc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = nc * h * w;  // reached only if the whole window is padding
        bool found = false;
        for (std::size_t i = 0; i < kh; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(oy * sh + i) - static_cast<std::ptrdiff_t>(ph);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * sw + j) - static_cast<std::ptrdiff_t>(pw);
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx);
            if (!found || plane[idx] > best) {
              best = plane[idx];
              best_i = nc * h * w + idx;
              found = true;
            }
          }
        }
        const std::size_t o = (nc * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_i;
      }
  }
  return Tensor<T>::make_result({n, c, oh, ow}, std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    auto& xn = *self.parents[0];
    for (std::size_t o = 0; o < self.grad.size(); ++o) xn.grad[arg[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> spp(const Tensor<T>& x) {
  return concat_channels<T>({x, max_pool2d(x, 3, 3, 1, 1, 1, 1), max_pool2d(x, 5, 5, 1, 1, 2, 2)});
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank4(x.shape(), "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output dims must be >= 1");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h == h && out_w == w)
    return Tensor<T>::make_result(x.shape(), std::vector<T>(x.value().begin(), x.value().end()), {x},
                                  [](Node<T>& self) {
                                    auto& xn = *self.parents[0];
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
                                  });
  std::vector<ResampleTap> rt(out_h), ct(out_w);
  for (std::size_t r = 0; r < out_h; ++r) rt[r] = resample_tap(r, h, out_h);
  for (std::size_t c = 0; c < out_w; ++c) ct[c] = resample_tap(c, w, out_w);
  std::vector<T> out(nc * out_h * out_w);
  const auto xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t r = 0; r < out_h; ++r) {
      const auto& a = rt[r];
      for (std::size_t c = 0; c < out_w; ++c) {
        const auto& b = ct[c];
        const T top = src[a.i0 * w + b.i0] * T(1 - b.w1) + src[a.i0 * w + b.i1] * T(b.w1);
        const T bot = src[a.i1 * w + b.i0] * T(1 - b.w1) + src[a.i1 * w + b.i1] * T(b.w1);
        dst[r * out_w + c] = top * T(1 - a.w1) + bot * T(a.w1);
      }
    }
  }
  return Tensor<T>::make_result(
      {x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
      [rt = std::move(rt), ct = std::move(ct), nc, h, w, out_h, out_w](Node<T>& self) {
        auto& xn = *self.parents[0];
        for (std::size_t p = 0; p < nc; ++p) {
          T* dsrc = xn.grad.data() + p * h * w;
          const T* g = self.grad.data() + p * out_h * out_w;
          for (std::size_t r = 0; r < out_h; ++r) {
            const auto& a = rt[r];
            for (std::size_t c = 0; c < out_w; ++c) {
              const auto& b = ct[c];
              const T gv = g[r * out_w + c];
              dsrc[a.i0 * w + b.i0] += gv * T(1 - a.w1) * T(1 - b.w1);
              dsrc[a.i0 * w + b.i1] += gv * T(1 - a.w1) * T(b.w1);
              dsrc[a.i1 * w + b.i0] += gv * T(a.w1) * T(1 - b.w1);
              dsrc[a.i1 * w + b.i1] += gv * T(a.w1) * T(b.w1);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  for (const auto& p : parts) require_rank4(p.shape(), "concat_channels");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
      throw ShapeError("concat_channels: " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    c += p.dim(1);
  }
  const std::size_t plane = h * w;
  std::vector<T> out(n * c * plane);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t pc = p.dim(1);
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(p.value().data() + b * pc * plane, pc * plane, out.data() + (b * c + off) * plane);
    off += pc;
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return Tensor<T>::make_result({n, c, h, w}, std::move(out), parts,
                                [offsets, widths, n, c, plane](Node<T>& self) {
                                  for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                    auto& pn = *self.parents[k];
                                    if (!pn.requires_grad) continue;
                                    const std::size_t pc = widths[k];
                                    for (std::size_t b = 0; b < n; ++b) {
                                      const T* src = self.grad.data() + (b * c + offsets[k]) * plane;
                                      T* dst = pn.grad.data() + b * pc * plane;
                                      for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> mean_width(const Tensor<T>& x) {
  require_rank4(x.shape(), "mean_width");
  const std::size_t rows = x.dim(0) * x.dim(1) * x.dim(2), w = x.dim(3);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < w; ++i) s += x.value()[r * w + i];
    out[r] = static_cast<T>(s / static_cast<double>(w));
  }
  return Tensor<T>::make_result({x.dim(0), x.dim(1), x.dim(2), 1}, std::move(out), {x}, [w](Node<T>& self) {
    auto& xn = *self.parents[0];
    const T inv = T(1) / static_cast<T>(w);
    for (std::size_t r = 0; r < self.grad.size(); ++r)
      for (std::size_t i = 0; i < w; ++i) xn.grad[r * w + i] += self.grad[r] * inv;
  });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& mask, const Tensor<T>& s) {
  require_rank4(mask.shape(), "scale_rows");
  require_rank4(s.shape(), "scale_rows");
  if (s.dim(0) != mask.dim(0) || s.dim(1) != mask.dim(1) || s.dim(2) != mask.dim(2) || s.dim(3) != 1)
    throw ShapeError("scale_rows: mask " + to_string(mask.shape()) + " vs row weights " + to_string(s.shape()));
  const std::size_t rows = s.numel(), w = mask.dim(3);
  std::vector<T> out(mask.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < w; ++i) out[r * w + i] = mask.value()[r * w + i] * s.value()[r];
  return Tensor<T>::make_result(mask.shape(), std::move(out), {mask, s}, [rows, w](Node<T>& self) {
    auto& mn = *self.parents[0];
    auto& sn = *self.parents[1];
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        acc += double{self.grad[r * w + i]} * mn.value[r * w + i];
        if (mn.requires_grad) mn.grad[r * w + i] += self.grad[r * w + i] * sn.value[r];
      }
      if (sn.requires_grad) sn.grad[r] += static_cast<T>(acc);
    }
  });
}

template <typename T>
Tensor<T> group_sum(const Tensor<T>& x, std::size_t group) {
  if (x.rank() < 1 || group == 0 || x.dim(0) % group != 0)
    throw ShapeError("group_sum: batch of " + to_string(x.shape()) + " not divisible by " + std::to_string(group));
  Shape shape = x.shape();
  shape[0] /= group;
  const std::size_t item = x.numel() / x.dim(0);
  std::vector<T> out(numel(shape), T(0));
  for (std::size_t b = 0; b < shape[0]; ++b)
    for (std::size_t j = 0; j < group; ++j) {
      const T* src = x.value().data() + (b * group + j) * item;
      for (std::size_t i = 0; i < item; ++i) out[b * item + i] += src[i];
    }
  return Tensor<T>::make_result(std::move(shape), std::move(out), {x}, [group, item](Node<T>& self) {
    auto& xn = *self.parents[0];
    const std::size_t batches = self.grad.size() / item;
    for (std::size_t b = 0; b < batches; ++b)
      for (std::size_t j = 0; j < group; ++j) {
        T* dst = xn.grad.data() + (b * group + j) * item;
        for (std::size_t i = 0; i < item; ++i) dst[i] += self.grad[b * item + i];
      }
  });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (weights.size() != x.numel()) throw ShapeError("weighted_sum: weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += double{x.value()[i]} * weights[i];
  return Tensor<T>::make_result({1}, {static_cast<T>(s)}, {x}, [weights](Node<T>& self) {
    auto& xn = *self.parents[0];
    for (std::size_t i = 0; i < weights.size(); ++i) xn.grad[i] += self.grad[0] * weights[i];
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("bce_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  const std::size_t count = pred.numel();
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double p = std::clamp(double{pred.value()[i]}, lo, hi);
    const double t = target.value()[i];
    s += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  const double loss = -s / static_cast<double>(count);
  return Tensor<T>::make_result({1}, {static_cast<T>(loss)}, {pred, target}, [count, lo, hi](Node<T>& self) {
    auto& pn = *self.parents[0];
    auto& tn = *self.parents[1];
    if (!pn.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double raw = pn.value[i];
      if (raw < lo || raw > hi) continue;
      const double t = tn.value[i];
      pn.grad[i] += static_cast<T>(g * (-(t / raw) + (1.0 - t) / (1.0 - raw)));
    }
  });
}

#define VELOPICK_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dSpec&); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                      const Conv2dSpec&);                                           \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                BatchNormState<T>&, bool);                                          \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                     \
  template Tensor<T> clamp01(const Tensor<T>&);                                                     \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t,           \
                                std::size_t, std::size_t, std::size_t);                             \
  template Tensor<T> spp(const Tensor<T>&);                                                         \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mean_width(const Tensor<T>&);                                                  \
  template Tensor<T> scale_rows(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> group_sum(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);                         \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);

VELOPICK_INSTANTIATE_OPS(float)
VELOPICK_INSTANTIATE_OPS(double)

#undef VELOPICK_INSTANTIATE_OPS

}  // namespace velopick::ag
