// SPDX-License-Identifier: Apache-2.0
//
// Grid, axis and curve types used throughout the pipeline. All grids are
// time-major: row index = time sample, column index = offset/velocity/cdp.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace velopick {

/// Regularly sampled time axis (seconds).
struct TimeAxis {
  double t_start = 0.0;
  double dt = 0.004;
  std::size_t n_t = 2;

  TimeAxis() = default;
  TimeAxis(double start, double step, std::size_t count);

  double time(std::size_t i) const { return t_start + dt * static_cast<double>(i); }
  double t_end() const { return time(n_t - 1); }
  /// Fractional index of `t`; not clamped.
  double position(double t) const { return (t - t_start) / dt; }
  /// Nearest sample index, clamped to [0, n_t).
  std::size_t nearest(double t) const;

  bool operator==(const TimeAxis&) const = default;
};

/// Regularly sampled trial-velocity axis (m/s).
struct VelocityAxis {
  double v_min = 1500.0;
  double dv = 50.0;
  std::size_t n_v = 2;

  VelocityAxis() = default;
  VelocityAxis(double vmin, double step, std::size_t count);

  double velocity(std::size_t j) const { return v_min + dv * static_cast<double>(j); }
  double v_max() const { return velocity(n_v - 1); }
  double position(double v) const { return (v - v_min) / dv; }
  std::size_t nearest(double v) const;

  bool operator==(const VelocityAxis&) const = default;
};

struct CurvePoint {
  double t = 0.0;  // seconds
  double v = 0.0;  // m/s

  bool operator==(const CurvePoint&) const = default;
};

/// Time-velocity polyline; times strictly increasing, velocities positive.
class VelocityCurve {
 public:
  VelocityCurve() = default;
  explicit VelocityCurve(std::vector<CurvePoint> points);

  const std::vector<CurvePoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Linear interpolation with constant hold beyond the outermost knots.
  double at(double t) const;

  /// Every velocity multiplied by `factor` (> 0); knot times unchanged.
  VelocityCurve scaled(double factor) const;

  bool operator==(const VelocityCurve&) const = default;

 private:
  std::vector<CurvePoint> points_;
};

/// Dense velocity series sampled on `axis`. Throws InvalidCurveError when the
/// curve has fewer than two knots.
std::vector<double> interp_curve(const VelocityCurve& curve, const TimeAxis& axis);

/// Row-major float matrix.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Grid2D(std::size_t rows, std::size_t cols, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  float max_value() const;
  float min_value() const;
  bool all_finite() const;

  bool operator==(const Grid2D&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

}  // namespace velopick
