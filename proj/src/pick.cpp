// SPDX-License-Identifier: Apache-2.0

#include "velopick/pick.hpp"

#include <algorithm>
#include <cmath>

#include "velopick/core/errors.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/spectrum.hpp"

namespace velopick::pick {

std::vector<CurvePoint> row_picks(const Grid2D& seg, const SpectrumAxes& axes, double floor) {
  if (seg.rows() != axes.time.n_t || seg.cols() != axes.velocity.n_v)
    throw ShapeError("segmentation map is " + std::to_string(seg.rows()) + "x" + std::to_string(seg.cols()) +
                     ", axes are " + std::to_string(axes.time.n_t) + "x" + std::to_string(axes.velocity.n_v));
  std::vector<CurvePoint> picks;
  for (std::size_t r = 0; r < seg.rows(); ++r) {
    const auto row = seg.row(r);
    const float peak = *std::max_element(row.begin(), row.end());
    if (!(peak >= floor)) continue;
    std::size_t sum = 0, count = 0;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (row[c] == peak) {
        sum += c;
        ++count;
      }
    // Round half up: (2 * sum + count) / (2 * count) in integers.
    const std::size_t col = (2 * sum + count) / (2 * count);
    picks.push_back({axes.time.time(r), axes.velocity.velocity(col)});
  }
  return picks;
}

LineFit fit_line(std::span<const CurvePoint> points) {
  if (points.empty()) throw EmptyPickError("fit_line: no points");
  if (points.size() == 1) return {points[0].v, 0.0};
  double mt = 0.0, mv = 0.0;
  for (const auto& p : points) {
    mt += p.t;
    mv += p.v;
  }
  mt /= static_cast<double>(points.size());
  mv /= static_cast<double>(points.size());
  double stt = 0.0, stv = 0.0;
  for (const auto& p : points) {
    stt += (p.t - mt) * (p.t - mt);
    stv += (p.t - mt) * (p.v - mv);
  }
  if (stt <= 0.0) return {mv, 0.0};
  const double slope = stv / stt;
  return {mv - slope * mt, slope};
}

VelocityCurve segmentation_to_curve(const Grid2D& seg, const SpectrumAxes& axes, const PickConfig& cfg) {
  const auto picks = row_picks(seg, axes, cfg.floor);
  if (picks.empty()) throw EmptyPickError("no row of the segmentation map reaches the activation floor");
  const TimeAxis& ta = axes.time;
  const double t_t = cfg.t_t > 0.0 ? cfg.t_t : 0.1 * (ta.t_end() - ta.t_start);

  LineFit shallow{picks.front().v, 0.0}, deep{picks.back().v, 0.0};
  if (picks.size() >= 2) {
    if (cfg.naive_extrapolation) {
      auto through = [](const CurvePoint& a, const CurvePoint& b) {
        const double slope = (b.v - a.v) / (b.t - a.t);
        return LineFit{a.v - slope * a.t, slope};
      };
      shallow = through(picks[0], picks[1]);
      deep = through(picks[picks.size() - 2], picks.back());
    } else {
      const double t_first = picks.front().t, t_last = picks.back().t;
      std::vector<CurvePoint> head, tail;
      for (const auto& p : picks) {
        if (p.t <= t_first + t_t) head.push_back(p);
        if (p.t >= t_last - t_t) tail.push_back(p);
      }
      shallow = fit_line(head);
      deep = fit_line(tail);
    }
  }

  auto clampv = [&](double v) { return std::clamp(v, axes.velocity.v_min, axes.velocity.v_max()); };
  std::vector<CurvePoint> out(ta.n_t);
  std::size_t k = 0;  // first pick with t >= current time
  for (std::size_t r = 0; r < ta.n_t; ++r) {
    const double t = ta.time(r);
    while (k < picks.size() && picks[k].t < t) ++k;
    double v;
    if (t < picks.front().t) {
      v = clampv(shallow.intercept + shallow.slope * t);
    } else if (t > picks.back().t) {
      v = clampv(deep.intercept + deep.slope * t);
    } else if (picks[k].t == t) {
      v = picks[k].v;
    } else {
      const auto& a = picks[k - 1];
      const auto& b = picks[k];
      v = a.v + (b.v - a.v) * (t - a.t) / (b.t - a.t);
    }
    out[r] = {t, v};
  }
  return VelocityCurve(std::move(out));
}

double vmae(const VelocityCurve& a, const VelocityCurve& b, const TimeAxis& axis) {
  const auto va = interp_curve(a, axis);
  const auto vb = interp_curve(b, axis);
  double s = 0.0;
  for (std::size_t i = 0; i < axis.n_t; ++i) s += std::abs(va[i] - vb[i]);
  return s / static_cast<double>(axis.n_t);
}

double StackTrace::total_power() const {
  double s = 0.0;
  for (double p : power) s += p;
  return s;
}

StackTrace stack(const CmpGather& gather, const VelocityCurve& curve) {
  const CmpGather nmo = spectrum::nmo_correct(gather, curve);
  StackTrace out;
  const std::size_t n_t = gather.geometry.time.n_t;
  out.trace.resize(n_t);
  out.power.resize(n_t);
  for (std::size_t r = 0; r < n_t; ++r) {
    double s = 0.0;
    for (float x : nmo.traces.row(r)) s += x;
    out.trace[r] = static_cast<float>(s);
    out.power[r] = s * s;
  }
  return out;
}

double QcReport::total_power() const {
  double s = 0.0;
  for (double p : stack_power) s += p;
  return s;
}

QcReport qc(std::span<const CmpGather> gathers, std::span<const VelocityCurve> curves) {
  if (gathers.size() != curves.size())
    throw DomainError("qc: " + std::to_string(gathers.size()) + " gathers but " + std::to_string(curves.size()) +
                      " curves");
  if (gathers.empty()) throw DomainError("qc: no gathers");
  const std::size_t n_t = gathers.front().geometry.time.n_t;
  for (const auto& g : gathers)
    if (g.geometry.time.n_t != n_t) throw DomainError("qc: gathers differ in time sampling");
  std::vector<StackTrace> stacks(gathers.size());
  parallel_for(gathers.size(), [&](std::size_t i) { stacks[i] = stack(gathers[i], curves[i]); });

  QcReport report;
  report.stack_power.assign(n_t, 0.0);
  report.stacked_section = Grid2D(n_t, gathers.size());
  for (std::size_t c = 0; c < stacks.size(); ++c)
    for (std::size_t r = 0; r < n_t; ++r) {
      report.stack_power[r] += stacks[c].power[r];
      report.stacked_section(r, c) = stacks[c].trace[r];
    }
  return report;
}

Grid2D velfield(std::span<const VelocityCurve> curves, const TimeAxis& axis) {
  if (curves.empty()) throw DomainError("velfield: no curves");
  Grid2D out(axis.n_t, curves.size());
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto v = interp_curve(curves[c], axis);
    for (std::size_t r = 0; r < axis.n_t; ++r) out(r, c) = static_cast<float>(v[r]);
  }
  return out;
}

}  // namespace velopick::pick
