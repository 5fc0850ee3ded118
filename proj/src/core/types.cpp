// SPDX-License-Identifier: Apache-2.0

#include "velopick/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "velopick/core/errors.hpp"

namespace velopick {

TimeAxis::TimeAxis(double start, double step, std::size_t count)
    : t_start(start), dt(step), n_t(count) {
  if (!(dt > 0.0)) throw DomainError("time axis: dt must be positive");
  if (n_t < 2) throw DomainError("time axis: need at least two samples");
}

std::size_t TimeAxis::nearest(double t) const {
  const double p = std::floor(position(t) + 0.5);
  if (p <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(p), n_t - 1);
}

VelocityAxis::VelocityAxis(double vmin, double step, std::size_t count)
    : v_min(vmin), dv(step), n_v(count) {
  if (!(v_min > 0.0)) throw DomainError("velocity axis: v_min must be positive");
  if (!(dv > 0.0)) throw DomainError("velocity axis: dv must be positive");
  if (n_v < 2) throw DomainError("velocity axis: need at least two samples");
}

std::size_t VelocityAxis::nearest(double v) const {
  const double p = std::floor(position(v) + 0.5);
  if (p <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(p), n_v - 1);
}

VelocityCurve::VelocityCurve(std::vector<CurvePoint> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].v > 0.0) || !std::isfinite(points_[i].v))
      throw InvalidCurveError("velocity curve: non-positive velocity at knot " + std::to_string(i));
    if (!std::isfinite(points_[i].t))
      throw InvalidCurveError("velocity curve: non-finite time at knot " + std::to_string(i));
    if (i > 0 && !(points_[i].t > points_[i - 1].t))
      throw InvalidCurveError("velocity curve: times not strictly increasing at knot " +
                              std::to_string(i));
  }
}

double VelocityCurve::at(double t) const {
  if (points_.size() < 2) throw InvalidCurveError("velocity curve: need at least two knots");
  if (t <= points_.front().t) return points_.front().v;
  if (t >= points_.back().t) return points_.back().v;
  auto hi = std::upper_bound(points_.begin(), points_.end(), t,
                             [](double x, const CurvePoint& p) { return x < p.t; });
  auto lo = hi - 1;
  const double w = (t - lo->t) / (hi->t - lo->t);
  return lo->v + w * (hi->v - lo->v);
}

VelocityCurve VelocityCurve::scaled(double factor) const {
  if (!(factor > 0.0)) throw DomainError("velocity curve: scale factor must be positive");
  std::vector<CurvePoint> out = points_;
  for (auto& p : out) p.v *= factor;
  return VelocityCurve(std::move(out));
}

std::vector<double> interp_curve(const VelocityCurve& curve, const TimeAxis& axis) {
  if (curve.size() < 2) throw InvalidCurveError("interp_curve: need at least two knots");
  std::vector<double> out(axis.n_t);
  for (std::size_t i = 0; i < axis.n_t; ++i) out[i] = curve.at(axis.time(i));
  return out;
}

Grid2D::Grid2D(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Grid2D::Grid2D(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_)
    throw ShapeError("grid: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     " does not match " + std::to_string(values_.size()) + " values");
}

float Grid2D::max_value() const {
  return values_.empty() ? 0.0f : *std::max_element(values_.begin(), values_.end());
}

float Grid2D::min_value() const {
  return values_.empty() ? 0.0f : *std::min_element(values_.begin(), values_.end());
}

bool Grid2D::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace velopick
