// SPDX-License-Identifier: Apache-2.0
//
// Hyperbolic moveout, NMO correction and semblance velocity spectra.

#pragma once

#include "velopick/core/dataset.hpp"
#include "velopick/core/gather.hpp"
#include "velopick/core/types.hpp"

namespace velopick::spectrum {

/// Semblance grid NE(t0, v) in [0, 1]; rows follow `axes.time`, columns
/// follow `axes.velocity`.
struct VelocitySpectrum {
  SpectrumAxes axes;
  Grid2D values;
};

constexpr int kDefaultWindowHalf = 5;
constexpr double kSemblanceEpsilon = 1e-12;

/// sqrt(t0^2 + x^2 / v^2). Throws DomainError for v <= 0 or t0 < 0.
double nmo_time(double t0, double x, double v);

/// Output row t0, trace i = input trace i linearly interpolated at
/// nmo_time(t0, x_i, v(t0)); zero where that time lies past the record.
CmpGather nmo_correct(const CmpGather& gather, const VelocityCurve& curve);

/// Semblance
///   NE = sum_t (sum_i f_i)^2 / (M * sum_t sum_i f_i^2)
/// with f_i read along the hyperbola of each window time t0 + j*dt,
/// |j| <= window_half (dt = gather sampling). Cells whose denominator is
/// below kSemblanceEpsilon are 0. Velocity columns run in parallel.
VelocitySpectrum semblance(const CmpGather& gather, const TimeAxis& taxis,
                           const VelocityAxis& vaxis, int window_half = kDefaultWindowHalf);

/// Axes used across the toolkit: 128 t0 samples at 16 ms from 0 s, 64 trial
/// velocities from 1400 m/s in 50 m/s steps.
SpectrumAxes default_axes();

}  // namespace velopick::spectrum
