// SPDX-License-Identifier: Apache-2.0
//
// Parameterised layers, the Adam optimiser and the weights container.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "velopick/ag/ops.hpp"
#include "velopick/core/rng.hpp"

namespace velopick::ag {

/// Named views of a model's trainable tensors and its non-trainable buffers
/// (batch-norm running statistics). Pointers stay valid while the model lives.
template <typename T>
struct ParamList {
  std::vector<std::pair<std::string, Tensor<T>*>> params;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers;
};

struct LayerConfig {
  std::size_t in_channels = 1, out_channels = 1;
  std::size_t kh = 3, kw = 3;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  bool bias = true;
  void validate() const;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  /// He-uniform weights (bound sqrt(6 / fan_in)), zero bias.
  Conv2d(const LayerConfig& cfg, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec()); }
  void collect(const std::string& prefix, ParamList<T>& out);
  Conv2dSpec spec() const { return {cfg_.sh, cfg_.sw, cfg_.ph, cfg_.pw}; }

  Tensor<T> weight;  // [out, in, kh, kw]
  Tensor<T> bias;    // [out] or undefined

 private:
  LayerConfig cfg_;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const LayerConfig& cfg, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return conv_transpose2d(x, weight, bias, spec()); }
  void collect(const std::string& prefix, ParamList<T>& out);
  Conv2dSpec spec() const { return {cfg_.sh, cfg_.sw, cfg_.ph, cfg_.pw}; }

  Tensor<T> weight;  // [in, out, kh, kw]
  Tensor<T> bias;

 private:
  LayerConfig cfg_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);
  Tensor<T> operator()(const Tensor<T>& x, bool training) { return batch_norm(x, gamma, beta, state, training); }
  void collect(const std::string& prefix, ParamList<T>& out);

  Tensor<T> gamma, beta;
  BatchNormState<T> state;
};

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `param` in place.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, const AdamConfig& cfg);

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamConfig cfg);
  void step();
  void zero_grad();
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
};

/// Raw contents of a weights file, keyed by record name.
struct WeightRecord {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};
using WeightMap = std::map<std::string, WeightRecord>;

/// "MIFNW1" followed by (u16 name length, name, u8 ndim, u32 dims, f32 data)
/// records, little-endian. Parameters and buffers are stored alike.
template <typename T>
void save_weights(const std::filesystem::path& path, const ParamList<T>& list);
WeightMap read_weights(const std::filesystem::path& path);
/// Copies every record of `weights` into the matching parameter or buffer.
/// Missing names, unknown names and shape mismatches raise FormatError.
template <typename T>
void assign_weights(const WeightMap& weights, const ParamList<T>& list);
template <typename T>
WeightMap snapshot_weights(const ParamList<T>& list);

}  // namespace velopick::ag
