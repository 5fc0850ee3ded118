// SPDX-License-Identifier: Apache-2.0

#include "velopick/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "velopick/core/errors.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/simd/kernels.hpp"

namespace velopick::spectrum {

double nmo_time(double t0, double x, double v) {
  if (!(v > 0.0)) throw DomainError("nmo_time: velocity must be positive");
  if (!(t0 >= 0.0)) throw DomainError("nmo_time: t0 must be non-negative");
  return std::sqrt(t0 * t0 + (x * x) / (v * v));
}

CmpGather nmo_correct(const CmpGather& gather, const VelocityCurve& curve) {
  const TimeAxis& axis = gather.geometry.time;
  const std::vector<double> v = interp_curve(curve, axis);
  const std::size_t n_t = axis.n_t;
  const std::size_t m = gather.geometry.traces();
  const double last = static_cast<double>(n_t - 1);
  Grid2D out(n_t, m);
  for (std::size_t r = 0; r < n_t; ++r) {
    const double t0 = std::max(0.0, axis.time(r));
    for (std::size_t i = 0; i < m; ++i) {
      double p = axis.position(nmo_time(t0, gather.geometry.offsets[i], v[r]));
      if (p < 0.0 || p > last + 1e-9) continue;
      p = std::min(p, last);  // round-off at the last sample
      const double i0 = std::min(std::floor(p), last - 1.0);
      const auto k = static_cast<std::size_t>(i0);
      const double w = p - i0;
      out(r, i) = static_cast<float>((1.0 - w) * gather.traces(k, i) + w * gather.traces(k + 1, i));
    }
  }
  return CmpGather(gather.geometry, std::move(out));
}

VelocitySpectrum semblance(const CmpGather& gather, const TimeAxis& taxis,
                           const VelocityAxis& vaxis, int window_half) {
  if (vaxis.n_v == 0) throw DomainError("semblance: empty velocity axis");
  if (window_half < 0) throw DomainError("semblance: window_half must be non-negative");

  const TimeAxis& g_axis = gather.geometry.time;
  const std::size_t m = gather.geometry.traces();
  const std::size_t n_t = g_axis.n_t;
  const std::size_t width = 2 * static_cast<std::size_t>(window_half) + 1;
  const std::size_t n_win = taxis.n_t * width;

  // Trace-major copy so each trace is contiguous for the sampling kernel.
  std::vector<float> traces(m * n_t);
  for (std::size_t r = 0; r < n_t; ++r)
    for (std::size_t i = 0; i < m; ++i) traces[i * n_t + r] = gather.traces(r, i);

  // Zero-offset times of every window sample. Negative times lie above the
  // record; NaN makes the sampling kernel return 0 for them.
  std::vector<float> t0(n_win);
  for (std::size_t r = 0; r < taxis.n_t; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      const double t = taxis.time(r) + (static_cast<double>(j) - window_half) * g_axis.dt;
      t0[r * width + j] = t >= 0.0 ? static_cast<float>(t) : std::numeric_limits<float>::quiet_NaN();
    }
  }

  const auto& k = simd::active_kernels();
  const float t_start = static_cast<float>(g_axis.t_start);
  const float inv_dt = static_cast<float>(1.0 / g_axis.dt);

  VelocitySpectrum out{{taxis, vaxis}, Grid2D(taxis.n_t, vaxis.n_v)};
  parallel_for(vaxis.n_v, [&](std::size_t c) {
    const double v = vaxis.velocity(c);
    std::vector<float> sampled(n_win), sum(n_win, 0.0f), sq(n_win, 0.0f);
    for (std::size_t i = 0; i < m; ++i) {
      const double x = gather.geometry.offsets[i];
      k.nmo_sample(traces.data() + i * n_t, n_t, t_start, inv_dt, t0.data(),
                   static_cast<float>((x * x) / (v * v)), sampled.data(), n_win);
      k.stack_accumulate(sampled.data(), sum.data(), sq.data(), n_win);
    }
    for (std::size_t r = 0; r < taxis.n_t; ++r) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t j = r * width; j < (r + 1) * width; ++j) {
        num += double{sum[j]} * sum[j];
        den += sq[j];
      }
      den *= static_cast<double>(m);
      out.values(r, c) = den < kSemblanceEpsilon ? 0.0f : static_cast<float>(std::clamp(num / den, 0.0, 1.0));
    }
  });
  return out;
}

SpectrumAxes default_axes() {
  return {TimeAxis(0.0, 0.016, 128), VelocityAxis(1400.0, 50.0, 64)};
}

}  // namespace velopick::spectrum
