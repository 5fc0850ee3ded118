// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operators. Unless noted, inputs are NCHW.

#pragma once

#include <vector>

#include "velopick/ag/tensor.hpp"

namespace velopick::ag {

struct Conv2dSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

/// Cross-correlation. weight: [Cout, Cin, kh, kw]; bias: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dSpec& spec);

/// Adjoint of conv2d. weight: [Cin, Cout, kh, kw]; output spatial size
/// (H - 1) * stride - 2 * pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const Conv2dSpec& spec);

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
};

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalisation. Training mode uses batch statistics (biased
/// variance) and updates the running estimates (unbiased variance) with
/// momentum 0.1; eval mode uses the running estimates.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, bool training);

/// x if x >= 0, slope * x otherwise.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
/// min(max(x, 0), 1); gradient passes only strictly inside (0, 1).
template <typename T>
Tensor<T> clamp01(const Tensor<T>& x);

/// Max pooling with -inf padding; ties resolve to the first index in
/// row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kh, std::size_t kw, std::size_t sh,
                     std::size_t sw, std::size_t ph = 0, std::size_t pw = 0);

/// [x, pool3x3(x), pool5x5(x)] along channels, all stride 1 with same padding.
template <typename T>
Tensor<T> spp(const Tensor<T>& x);

/// Bilinear resize with half-pixel centres (align_corners = false).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Mean over the last (width) axis: [N,C,H,W] -> [N,C,H,1].
template <typename T>
Tensor<T> mean_width(const Tensor<T>& x);

/// out[n,c,h,w] = mask[n,c,h,w] * s[n,c,h,0]
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& mask, const Tensor<T>& s);

/// Sums consecutive groups along the batch axis: [N*g, ...] -> [N, ...].
template <typename T>
Tensor<T> group_sum(const Tensor<T>& x, std::size_t group);

/// Sum of x * weights over all elements (scalar). weights is constant.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

constexpr double kBceClamp = 1e-7;

/// -(1/N) sum_n (1/(H W)) sum_ij [t log p + (1 - t) log(1 - p)], with p
/// clamped to [1e-7, 1 - 1e-7]. target is constant.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace velopick::ag
