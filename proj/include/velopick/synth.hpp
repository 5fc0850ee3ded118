// SPDX-License-Identifier: Apache-2.0
//
// Layered-earth synthetic CMP gathers with hyperbolic reflection moveout and
// RMS-velocity ground truth.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "velopick/core/gather.hpp"
#include "velopick/core/rng.hpp"
#include "velopick/core/types.hpp"

namespace velopick::synth {

struct Layer {
  double t_base = 0.0;      // two-way time at the base of the layer (s)
  double v_interval = 0.0;  // m/s
  double amplitude = 1.0;   // reflection amplitude at the base
};

struct LayerModel {
  std::vector<Layer> layers;
  double peak_hz = 25.0;

  /// Throws DomainError unless base times increase strictly and velocities
  /// are positive.
  void validate() const;
};

/// Ricker wavelet (negative normalised second derivative of a Gaussian),
/// unit peak at t = 0.
double ricker(double t, double peak_hz);

/// Dix-type RMS velocity from the surface down to t0.
double rms_velocity(const LayerModel& model, double t0);

/// Knots (base time, RMS velocity at that base) for every layer.
VelocityCurve truth_curve(const LayerModel& model);

struct SyntheticGather {
  CmpGather gather;
  VelocityCurve truth;
};

constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// One CMP gather. Each reflector contributes amplitude * ricker(t - t_i)
/// with t_i from the stacking hyperbola at the RMS velocity of its base.
/// White Gaussian noise is scaled to the requested SNR (dB) over the whole
/// gather; +inf disables noise.
SyntheticGather make_gather(const LayerModel& model, const AcquisitionGeometry& geometry,
                            double snr_db, Rng& rng);

struct LineParams {
  LayerModel base;
  AcquisitionGeometry geometry;
  int n_cdp = 21;
  int min_cdp = 5;           // SGS neighbourhood width the line must support
  double drift = 0.0;        // fractional velocity change per cdp
  double time_wobble = 0.0;  // amplitude (s) of a smooth lateral shift of base times
  double snr_db = kNoNoise;
  std::uint64_t seed = 0;
};

/// Adjacent gathers under a laterally smooth perturbation of `base`: cdp c
/// scales interval velocities by (1 + drift * c) and shifts base times by
/// time_wobble * sin(pi * c / (n_cdp - 1)). Gather c draws noise from
/// Rng(seed).split(c), so generation is order independent.
std::vector<SyntheticGather> make_line(const LineParams& params);

/// Writes gathers, truth curves and manifest.json into `dir`.
void write_line(const std::filesystem::path& dir, const std::vector<SyntheticGather>& gathers,
                const std::string& line_name, const std::string& split);

struct RandomModelParams {
  int min_layers = 4;
  int max_layers = 7;
  double t_min = 0.15;
  double t_max = 1.95;
  double min_separation = 0.12;
  double v_top_min = 1500.0;
  double v_top_max = 2000.0;
  double dv_min = 100.0;
  double dv_max = 600.0;
  double peak_hz = 25.0;
};

/// Random monotone-ish layer stack for building training and test lines.
LayerModel random_layer_model(Rng& rng, const RandomModelParams& params = {});

/// Default acquisition used by the CLI and tests: offsets 100..3000 m in
/// 100 m steps, 2 ms sampling, 1024 samples.
AcquisitionGeometry default_geometry();

}  // namespace velopick::synth
