// SPDX-License-Identifier: Apache-2.0
//
// Spectrum feature extractor: four-step enhancement of a velocity spectrum
// and the ten-channel multi-scale observation stack built from it.

#pragma once

#include <array>
#include <vector>

#include "velopick/core/types.hpp"

namespace velopick::enhance {

struct EnhanceParams {
  int ws = 1;        // moving-average window (samples)
  int st = 1;        // number of smoothing passes
  double eec = 1.0;  // power applied element-wise
  int ln = 1;        // number of horizontal normalisation layers
  double lb = 0.0;   // values below are zeroed
  double ub = 1.0;   // values above are clipped to ub

  void validate() const;
};

constexpr double kLowerBound = 0.2;
constexpr double kUpperBound = 0.8;

/// The nine (ws, st, eec, ln) combinations, each with lb = 0.2, ub = 0.8.
const std::array<EnhanceParams, 9>& parameter_rows();

// Individual steps, exposed for testing.
/// `st` passes of a centred length-`ws` moving average down each column;
/// windows are truncated at the edges (mean over the samples that exist).
void smooth_columns(Grid2D& grid, int ws, int st);
void power_inflate(Grid2D& grid, double eec);
/// Splits rows into `ln` contiguous bands (the first rows % ln bands get one
/// extra row) and divides each band by its maximum; all-zero bands stay 0.
void normalize_layers(Grid2D& grid, int ln);
void limit_amplitude(Grid2D& grid, double lb, double ub);

/// smooth -> power -> layer normalisation -> amplitude limitation.
Grid2D enhance(const Grid2D& spectrum, const EnhanceParams& params);

/// Channel 0: the spectrum itself; channels 1..9: enhance() with rows 0..8.
std::vector<Grid2D> multiscale_stack(const Grid2D& spectrum);

constexpr int kStackChannels = 10;

}  // namespace velopick::enhance
