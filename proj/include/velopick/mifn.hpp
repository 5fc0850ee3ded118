// SPDX-License-Identifier: Apache-2.0
//
// Multi-information fusion network: an SGS encoder that turns stacked gather
// slices into one prior channel, fused with the multi-scale spectrum stack
// and segmented by a U-Net.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "velopick/ag/layers.hpp"
#include "velopick/core/types.hpp"

namespace velopick::mifn {

enum class Variant {
  kFull,   // 10 spectrum channels + SGS channel
  kNoSfe,  // raw spectrum + SGS channel
  kNoSgs,  // 10 spectrum channels, no SGS encoder
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct MifnConfig {
  std::size_t height = 256;
  std::size_t width = 128;
  std::size_t depth = 4;
  std::size_t base_channels = 16;
  // SGS encoder: two CBL stages.
  std::size_t cbl_channels1 = 8;
  std::size_t cbl_channels2 = 16;
  std::size_t cbl_kh = 5, cbl_kw = 3;
  std::size_t cbl_sh = 3, cbl_sw = 2;
  double leaky_slope = 0.1;
  Variant variant = Variant::kFull;

  std::size_t input_channels() const;
  bool uses_sgs() const { return variant != Variant::kNoSgs; }
  /// Throws ConfigError unless H and W are divisible by 2^depth and all
  /// sizes are positive.
  void validate() const;
};

/// Network input for one spectrum location, already at the model's H x W.
struct Sample {
  std::vector<Grid2D> spectrum;  // 10 channels (1 used by kNoSfe)
  std::vector<Grid2D> slices;    // m SGS slices, T x k
  std::vector<Grid2D> masks;     // m VC masks, H x W
  Grid2D label;                  // H x W soft label (training only)
};

/// Conv + batch-norm + activation.
template <typename T>
struct ConvBlock {
  ag::Conv2d<T> conv;
  ag::BatchNorm2d<T> bn;
  double slope = 0.0;  // 0 = ReLU
  ConvBlock() = default;
  ConvBlock(const ag::LayerConfig& cfg, double slope, Rng& rng);
  ag::Tensor<T> operator()(const ag::Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ag::ParamList<T>& out);
};

template <typename T>
class Mifn {
 public:
  Mifn(const MifnConfig& cfg, std::uint64_t seed);
  // The parameter list points into the members.
  Mifn(const Mifn&) = delete;
  Mifn& operator=(const Mifn&) = delete;

  const MifnConfig& config() const { return cfg_; }

  /// slices: [N*m, 1, T, k]; masks: [N*m, 1, H, W] -> [N, 1, H, W] in [0, 1].
  ag::Tensor<T> encode_sgs(const ag::Tensor<T>& slices, const ag::Tensor<T>& masks, std::size_t m,
                           bool training);
  /// Per-curve weight vectors s_j after the sigmoid: [N*m, 1, H, 1].
  ag::Tensor<T> sgs_weights(const ag::Tensor<T>& slices, bool training);
  /// features: [N, C, H, W] (C = input_channels()) -> probabilities [N, 1, H, W].
  ag::Tensor<T> unet(const ag::Tensor<T>& features, bool training);
  /// Full forward pass on a batch of samples.
  ag::Tensor<T> forward(const std::vector<const Sample*>& batch, bool training);

  /// Replaces the skip input of decoder stage `level` by zeros (0 = finest).
  /// Used to check that skip connections are wired.
  void set_skip_disabled(std::size_t level, bool disabled);

  ag::ParamList<T>& parameters() { return params_; }
  std::vector<ag::Tensor<T>*> trainable();

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);
  ag::WeightMap snapshot() const;
  void restore(const ag::WeightMap& weights);

 private:
  MifnConfig cfg_;
  ConvBlock<T> cbl1_, cbl2_;
  ag::Conv2d<T> sgs_head_;
  std::vector<std::pair<ConvBlock<T>, ConvBlock<T>>> down_;
  std::pair<ConvBlock<T>, ConvBlock<T>> bottleneck_;
  std::vector<ag::ConvTranspose2d<T>> up_;
  std::vector<std::pair<ConvBlock<T>, ConvBlock<T>>> up_blocks_;
  ag::Conv2d<T> head_;
  std::vector<bool> skip_disabled_;
  ag::ParamList<T> params_;
};

/// Stacks sample fields into batch tensors.
template <typename T>
ag::Tensor<T> batch_features(const std::vector<const Sample*>& batch, const MifnConfig& cfg);
template <typename T>
ag::Tensor<T> batch_slices(const std::vector<const Sample*>& batch);
template <typename T>
ag::Tensor<T> batch_masks(const std::vector<const Sample*>& batch);
template <typename T>
ag::Tensor<T> batch_labels(const std::vector<const Sample*>& batch);

/// Single-sample inference in eval mode; returns the H x W probability map.
Grid2D predict(Mifn<float>& net, const Sample& sample);

extern template class Mifn<float>;
extern template class Mifn<double>;

}  // namespace velopick::mifn
