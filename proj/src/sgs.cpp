// SPDX-License-Identifier: Apache-2.0

#include "velopick/sgs.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "velopick/core/errors.hpp"
#include "velopick/core/resample.hpp"
#include "velopick/spectrum.hpp"

namespace velopick::sgs {

std::vector<double> default_percentages() { return {0.8, 0.9, 1.0, 1.1, 1.2}; }

std::vector<VelocityCurve> scan_curves(const VelocityCurve& reference,
                                       std::span<const double> percentages) {
  if (percentages.empty()) throw DomainError("scan_curves: empty percentage list");
  std::vector<VelocityCurve> out;
  out.reserve(percentages.size());
  for (double p : percentages) {
    if (!(p > 0.0)) throw DomainError("scan_curves: percentages must be positive");
    out.push_back(reference.scaled(p));
  }
  return out;
}

std::vector<std::size_t> neighbourhood(std::size_t center, std::size_t n_cdp, std::size_t k) {
  if (k == 0 || k > n_cdp) throw DomainError("neighbourhood: need 1 <= k <= n_cdp");
  if (center >= n_cdp) throw DomainError("neighbourhood: center outside the line");
  const std::size_t half = k / 2;
  std::size_t first = center >= half ? center - half : 0;
  first = std::min(first, n_cdp - k);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = first + i;
  return out;
}

SgsPack build_sgs(std::span<const CmpGather> gathers, const std::vector<VelocityCurve>& curves,
                  const VelocityCurve& reference) {
  if (gathers.empty()) throw DomainError("build_sgs: empty neighbourhood");
  if (curves.empty()) throw DomainError("build_sgs: no scan curves");
  const auto& geom = gathers.front().geometry;
  for (const auto& g : gathers)
    if (!(g.geometry == geom)) throw DomainError("build_sgs: neighbourhood gathers differ in geometry");

  const std::size_t n_t = geom.time.n_t;
  const std::size_t k = gathers.size();
  SgsPack pack;
  pack.reference = reference;
  pack.curves = curves;
  pack.k = k;
  float peak = 0.0f;
  for (const auto& curve : curves) {
    Grid2D slice(n_t, k);
    for (std::size_t c = 0; c < k; ++c) {
      const CmpGather nmo = spectrum::nmo_correct(gathers[c], curve);
      for (std::size_t r = 0; r < n_t; ++r) {
        double s = 0.0;
        for (float x : nmo.traces.row(r)) s += x;
        slice(r, c) = static_cast<float>(s);
        peak = std::max(peak, std::abs(slice(r, c)));
      }
    }
    pack.slices.push_back(std::move(slice));
  }
  if (peak > 1e-12f) {
    const float inv = 1.0f / peak;
    for (auto& s : pack.slices)
      for (float& x : s.values()) x *= inv;
  }
  return pack;
}

VcMask rasterize_vc(const VelocityCurve& curve, const SpectrumAxes& axes, std::size_t h) {
  if (h < 2) throw DomainError("rasterize_vc: h must be >= 2");
  const std::size_t rows = axes.time.n_t;
  const std::size_t cols = axes.velocity.n_v;
  Grid2D coarse(h, cols);
  VcMask out;
  const double ratio = static_cast<double>(rows) / static_cast<double>(h);
  for (std::size_t k = 0; k < h; ++k) {
    // Centre of coarse row k expressed in fine-row units, so that the bilinear
    // upsampling below puts the ridge back on the curve.
    const double fine = (static_cast<double>(k) + 0.5) * ratio - 0.5;
    const double t = axes.time.t_start + fine * axes.time.dt;
    const double v = curve.at(t);
    const auto p = static_cast<std::size_t>(
        std::lround((axes.time.position(t) + 0.5) / ratio - 0.5));
    const double q = std::round(axes.velocity.position(v));
    std::size_t col = 0;
    if (q < 0.0) {
      ++out.clamped;
    } else if (q > static_cast<double>(cols - 1)) {
      ++out.clamped;
      col = cols - 1;
    } else {
      col = static_cast<std::size_t>(q);
    }
    coarse(std::min(p, h - 1), col) = 1.0f;
  }
  if (out.clamped > 0)
    spdlog::warn("rasterize_vc: {} curve points outside the velocity axis clamped to edge columns",
                 out.clamped);
  out.mask = resize_bilinear(coarse, rows, cols);
  return out;
}

VelocityCurve reference_from_labels(std::span<const VelocityCurve> labels, const TimeAxis& axis) {
  if (labels.empty()) throw DomainError("reference_from_labels: no labels");
  std::vector<double> mean(axis.n_t, 0.0);
  for (const auto& l : labels) {
    const auto v = interp_curve(l, axis);
    for (std::size_t i = 0; i < axis.n_t; ++i) mean[i] += v[i];
  }
  std::vector<CurvePoint> pts(axis.n_t);
  for (std::size_t i = 0; i < axis.n_t; ++i) pts[i] = {axis.time(i), mean[i] / static_cast<double>(labels.size())};
  return VelocityCurve(std::move(pts));
}

VelocityCurve reference_from_cvs(const CmpGather& gather, const SpectrumAxes& axes) {
  const TimeAxis& g_axis = gather.geometry.time;
  const std::size_t rows = axes.time.n_t;
  std::vector<double> best_power(rows, 0.0), best_v(rows, axes.velocity.v_min);
  for (std::size_t c = 0; c < axes.velocity.n_v; ++c) {
    const double v = axes.velocity.velocity(c);
    const CmpGather nmo = spectrum::nmo_correct(
        gather, VelocityCurve({{g_axis.t_start, v}, {g_axis.t_end() + g_axis.dt, v}}));
    std::vector<double> stack(g_axis.n_t);
    for (std::size_t r = 0; r < g_axis.n_t; ++r) {
      double s = 0.0;
      for (float x : nmo.traces.row(r)) s += x;
      stack[r] = s * s;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto centre = static_cast<std::ptrdiff_t>(g_axis.nearest(axes.time.time(r)));
      double power = 0.0;
      for (std::ptrdiff_t j = -spectrum::kDefaultWindowHalf; j <= spectrum::kDefaultWindowHalf; ++j) {
        const auto s = centre + j;
        if (s >= 0 && s < static_cast<std::ptrdiff_t>(g_axis.n_t)) power += stack[static_cast<std::size_t>(s)];
      }
      if (power > best_power[r]) {
        best_power[r] = power;
        best_v[r] = v;
      }
    }
  }
  // Power-weighted least squares v = a + b t.
  double sw = 0, st = 0, sv = 0, stt = 0, stv = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double w = best_power[r];
    const double t = axes.time.time(r);
    sw += w;
    st += w * t;
    sv += w * best_v[r];
    stt += w * t * t;
    stv += w * t * best_v[r];
  }
  double a = 0.5 * (axes.velocity.v_min + axes.velocity.v_max());
  double b = 0.0;
  const double det = sw * stt - st * st;
  if (sw > 0.0 && std::abs(det) > 1e-12 * sw * sw) {
    b = (sw * stv - st * sv) / det;
    a = (sv - b * st) / sw;
  } else if (sw > 0.0) {
    a = sv / sw;
  }
  auto clampv = [&](double v) { return std::clamp(v, axes.velocity.v_min, axes.velocity.v_max()); };
  const double t0 = axes.time.t_start;
  const double t1 = axes.time.t_end();
  return VelocityCurve({{t0, clampv(a + b * t0)}, {t1, clampv(a + b * t1)}});
}

}  // namespace velopick::sgs
