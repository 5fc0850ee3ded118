// SPDX-License-Identifier: Apache-2.0

#include "velopick/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "velopick/core/dataset.hpp"
#include "velopick/core/errors.hpp"
#include "velopick/core/io.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/spectrum.hpp"

namespace velopick::synth {

void LayerModel::validate() const {
  if (layers.empty()) throw DomainError("layer model: no layers");
  if (!(peak_hz > 0.0)) throw DomainError("layer model: peak frequency must be positive");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!(layers[i].t_base > 0.0)) throw DomainError("layer model: base times must be positive");
    if (i > 0 && !(layers[i].t_base > layers[i - 1].t_base))
      throw DomainError("layer model: base times must increase strictly");
    if (!(layers[i].v_interval > 0.0))
      throw DomainError("layer model: interval velocities must be positive");
  }
}

double ricker(double t, double peak_hz) {
  const double a = std::numbers::pi * peak_hz * t;
  const double a2 = a * a;
  return (1.0 - 2.0 * a2) * std::exp(-a2);
}

double rms_velocity(const LayerModel& model, double t0) {
  model.validate();
  if (!(t0 > 0.0)) throw DomainError("rms_velocity: t0 must be positive");
  const double span = model.layers.back().t_base;
  if (t0 > span * (1.0 + 1e-12)) throw DomainError("rms_velocity: t0 below the model base");
  double top = 0.0;
  double weighted = 0.0;
  for (const auto& layer : model.layers) {
    const double bottom = std::min(layer.t_base, t0);
    weighted += layer.v_interval * layer.v_interval * (bottom - top);
    top = bottom;
    if (layer.t_base >= t0) break;
  }
  return std::sqrt(weighted / t0);
}

VelocityCurve truth_curve(const LayerModel& model) {
  model.validate();
  std::vector<CurvePoint> pts;
  pts.reserve(model.layers.size());
  for (const auto& layer : model.layers) pts.push_back({layer.t_base, rms_velocity(model, layer.t_base)});
  if (pts.size() == 1) pts.push_back({pts[0].t * 2.0, pts[0].v});
  return VelocityCurve(std::move(pts));
}

SyntheticGather make_gather(const LayerModel& model, const AcquisitionGeometry& geometry,
                            double snr_db, Rng& rng) {
  model.validate();
  const TimeAxis& axis = geometry.time;
  const std::size_t n_t = axis.n_t;
  const std::size_t m = geometry.traces();
  Grid2D data(n_t, m);

  // Wavelet support: beyond 3/f the Ricker is below 1e-30.
  const double half_support = 3.0 / model.peak_hz;
  for (const auto& layer : model.layers) {
    if (layer.amplitude == 0.0) continue;
    const double v = rms_velocity(model, layer.t_base);
    for (std::size_t i = 0; i < m; ++i) {
      const double ti = spectrum::nmo_time(layer.t_base, geometry.offsets[i], v);
      const double lo = std::max(0.0, std::ceil(axis.position(ti - half_support)));
      const double hi = std::min(static_cast<double>(n_t - 1), std::floor(axis.position(ti + half_support)));
      for (double s = lo; s <= hi; s += 1.0) {
        const auto r = static_cast<std::size_t>(s);
        data(r, i) += static_cast<float>(layer.amplitude * ricker(axis.time(r) - ti, model.peak_hz));
      }
    }
  }

  if (std::isfinite(snr_db)) {
    double power = 0.0;
    for (float x : data.values()) power += double{x} * x;
    power /= static_cast<double>(data.size());
    if (!(power > 0.0)) throw DomainError("make_gather: SNR requested but the signal has zero power");
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    for (float& x : data.values()) x += static_cast<float>(rng.normal(0.0, sigma));
  } else if (!(snr_db > 0.0)) {
    throw DomainError("make_gather: snr_db must be finite or +inf");
  }

  return {CmpGather(geometry, std::move(data)), truth_curve(model)};
}

std::vector<SyntheticGather> make_line(const LineParams& p) {
  if (p.n_cdp < 1) throw DomainError("make_line: n_cdp must be positive");
  if (p.n_cdp < p.min_cdp)
    throw DomainError("make_line: line of " + std::to_string(p.n_cdp) +
                      " cdps cannot hold a neighbourhood of " + std::to_string(p.min_cdp));
  p.base.validate();
  std::vector<SyntheticGather> out(static_cast<std::size_t>(p.n_cdp));
  const Rng root(p.seed);
  parallel_for(out.size(), [&](std::size_t c) {
    LayerModel model = p.base;
    const double scale = 1.0 + p.drift * static_cast<double>(c);
    if (!(scale > 0.0)) throw DomainError("make_line: drift drives velocities non-positive");
    const double shift =
        p.n_cdp > 1 ? p.time_wobble * std::sin(std::numbers::pi * static_cast<double>(c) / (p.n_cdp - 1))
                    : 0.0;
    for (auto& layer : model.layers) {
      layer.v_interval *= scale;
      layer.t_base += shift;
    }
    Rng rng = root.split(c);
    out[c] = make_gather(model, p.geometry, p.snr_db, rng);
  });
  return out;
}

void write_line(const std::filesystem::path& dir, const std::vector<SyntheticGather>& gathers,
                const std::string& line_name, const std::string& split) {
  if (gathers.empty()) throw DomainError("write_line: no gathers");
  LineManifest m;
  m.line = line_name;
  m.split = split;
  m.geometry = gathers.front().gather.geometry;
  for (std::size_t c = 0; c < gathers.size(); ++c) {
    CdpEntry e;
    e.cdp = static_cast<int>(c);
    e.gather = "gather_" + format_index(e.cdp) + ".vpk";
    e.label = "truth_" + format_index(e.cdp) + ".csv";
    io::write_grid(dir / e.gather, gathers[c].gather.traces);
    io::write_curve_csv(dir / e.label, gathers[c].truth);
    m.cdps.push_back(std::move(e));
  }
  write_manifest(dir, m);
}

LayerModel random_layer_model(Rng& rng, const RandomModelParams& p) {
  LayerModel model;
  model.peak_hz = p.peak_hz;
  const int n = static_cast<int>(rng.integer(p.min_layers, p.max_layers));
  std::vector<double> times;
  // Rejection sampling of well-separated base times.
  for (int attempt = 0; attempt < 1000 && static_cast<int>(times.size()) < n; ++attempt) {
    const double t = rng.uniform(p.t_min, p.t_max);
    const bool clear = std::all_of(times.begin(), times.end(),
                                   [&](double u) { return std::abs(u - t) >= p.min_separation; });
    if (clear) times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  double v = rng.uniform(p.v_top_min, p.v_top_max);
  for (double t : times) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    model.layers.push_back({t, v, sign * rng.uniform(0.5, 1.0)});
    v += rng.uniform(p.dv_min, p.dv_max);
  }
  return model;
}

AcquisitionGeometry default_geometry() {
  std::vector<double> offsets;
  for (int i = 1; i <= 30; ++i) offsets.push_back(100.0 * i);
  return AcquisitionGeometry(std::move(offsets), TimeAxis(0.0, 0.002, 1024));
}

}  // namespace velopick::synth
