// SPDX-License-Identifier: Apache-2.0
//
// Soft labels, the training loop and early stopping.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "velopick/core/dataset.hpp"
#include "velopick/mifn.hpp"

namespace velopick::train {

constexpr float kLabelCenter = 1.0f;
constexpr float kLabelHalo = 0.8f;

/// T x V label grid: for every time sample the interpolated curve velocity
/// is snapped to the nearest column (value 1); its in-bounds 8-neighbours get
/// 0.8 unless they already hold a 1. Velocities outside the axis are clamped
/// to the edge column with a warning.
Grid2D soft_label(const VelocityCurve& curve, const SpectrumAxes& axes);

/// Mean binary cross-entropy of two equally sized grids (scalar formula,
/// p clamped to [1e-7, 1 - 1e-7]).
double bce(const Grid2D& pred, const Grid2D& target);

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 0.01;
  std::size_t max_iterations = 5000;
  std::size_t validate_every = 15;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Patience counter over validation losses. A loss counts as an improvement
/// only when strictly below the best seen so far.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  /// Records one validation loss; returns true when training should stop.
  bool update(double loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  std::size_t stale() const { return stale_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  bool improved_ = false;
};

struct HistoryRow {
  std::size_t iter = 0;
  double train_bce = 0.0;  // mean batch loss since the previous validation
  double val_bce = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t iterations = 0;
  std::size_t best_iter = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

using ProgressFn = std::function<void(const HistoryRow&)>;

/// Adam on shuffled batches; validates every `validate_every` iterations and
/// leaves `net` holding the best-validation weights. Continuing from weights
/// already loaded into `net` is fine-tuning. Empty splits raise ConfigError.
TrainResult fit(mifn::Mifn<float>& net, const std::vector<mifn::Sample>& train_set,
                const std::vector<mifn::Sample>& val_set, const TrainConfig& cfg,
                const ProgressFn& progress = {});

/// Mean BCE of the network (eval mode) over `samples`.
double evaluate(mifn::Mifn<float>& net, const std::vector<mifn::Sample>& samples, std::size_t batch_size);

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

}  // namespace velopick::train
