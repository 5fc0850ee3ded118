// SPDX-License-Identifier: Apache-2.0
//
// Segmentation map -> velocity curve, and quality control of picked curves.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "velopick/core/dataset.hpp"
#include "velopick/core/gather.hpp"
#include "velopick/core/types.hpp"

namespace velopick::pick {

constexpr double kActivationFloor = 0.05;

struct PickConfig {
  double t_t = 0.0;  // regression span (s) at each end; <= 0 means 10% of the axis span
  bool naive_extrapolation = false;
  double floor = kActivationFloor;
};

/// Per-row picks before interpolation: (time, velocity) for every row whose
/// maximum reaches the floor. Equal maxima are averaged and rounded half up.
std::vector<CurvePoint> row_picks(const Grid2D& seg, const SpectrumAxes& axes, double floor = kActivationFloor);

/// One knot per time sample. Rows between picks are interpolated linearly;
/// rows before the first and after the last pick are filled by least-squares
/// lines through the picks within T_t of that end (or, with naive
/// extrapolation, the line through the two outermost picks). Filled
/// velocities are clamped to the velocity axis. Throws EmptyPickError when no
/// row reaches the floor. `seg` must already have the axes' dimensions.
VelocityCurve segmentation_to_curve(const Grid2D& seg, const SpectrumAxes& axes, const PickConfig& cfg = {});

/// Mean absolute difference of the two curves sampled on `axis`.
double vmae(const VelocityCurve& a, const VelocityCurve& b, const TimeAxis& axis);

/// Ordinary least-squares fit v = intercept + slope * t.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
};
LineFit fit_line(std::span<const CurvePoint> points);

struct StackTrace {
  std::vector<float> trace;   // offset sum of the NMO-corrected gather
  std::vector<double> power;  // trace squared
  double total_power() const;
};
StackTrace stack(const CmpGather& gather, const VelocityCurve& curve);

struct QcReport {
  std::optional<double> vmae;       // when a reference curve is available
  std::vector<double> stack_power;  // per time sample, summed over cdps
  Grid2D stacked_section;           // n_t x n_cdp
  double total_power() const;
};

/// NMO-corrects gathers[i] with curves[i] and stacks them side by side.
QcReport qc(std::span<const CmpGather> gathers, std::span<const VelocityCurve> curves);

/// Velocity field: column i = curves[i] sampled on `axis`.
Grid2D velfield(std::span<const VelocityCurve> curves, const TimeAxis& axis);

}  // namespace velopick::pick
