// SPDX-License-Identifier: Apache-2.0
//
// Stacked gather slices (SGS): for a family of scanned velocity curves, the
// NMO stacks of a small neighbourhood of CMPs, plus the rasterised masks
// that place each curve on the spectrum grid.

#pragma once

#include <span>
#include <vector>

#include "velopick/core/dataset.hpp"
#include "velopick/core/gather.hpp"
#include "velopick/core/types.hpp"

namespace velopick::sgs {

struct SgsPack {
  VelocityCurve reference;
  std::vector<VelocityCurve> curves;  // m scanned curves
  std::vector<Grid2D> slices;         // m slices, each T x k, jointly scaled to [-1, 1]
  std::size_t k = 0;
};

struct VcMask {
  Grid2D mask;               // H x W, values in [0, 1]
  std::size_t clamped = 0;   // sampled points that fell outside the velocity axis
};

constexpr int kDefaultWidth = 5;

/// 80% .. 120% in 10% steps.
std::vector<double> default_percentages();

/// Curve j = reference with velocities multiplied by percentages[j].
std::vector<VelocityCurve> scan_curves(const VelocityCurve& reference,
                                       std::span<const double> percentages);

/// Indices of the k cdps used for `center` on a line of `n_cdp`: centred when
/// possible, shifted inward at the line ends.
std::vector<std::size_t> neighbourhood(std::size_t center, std::size_t n_cdp, std::size_t k);

/// Column c of slice j = offset-sum of neighbourhood[c] NMO-corrected with
/// curves[j]. The whole pack is then divided by its largest |amplitude|.
SgsPack build_sgs(std::span<const CmpGather> neighbourhood, const std::vector<VelocityCurve>& curves,
                  const VelocityCurve& reference);

/// Samples the curve at h uniformly spaced times, marks one cell per coarse
/// row on an h x W grid (column = nearest velocity sample, clamped), then
/// bilinearly resizes the coarse grid to the spectrum's H x W.
VcMask rasterize_vc(const VelocityCurve& curve, const SpectrumAxes& axes, std::size_t h);

/// Mean of the label curves sampled on `axis` (one knot per sample).
VelocityCurve reference_from_labels(std::span<const VelocityCurve> labels, const TimeAxis& axis);

/// Constant-velocity scan: per spectrum time, the trial velocity with the
/// largest windowed stack power, then a least-squares line through those
/// picks (weighted by power) evaluated at both axis ends.
VelocityCurve reference_from_cvs(const CmpGather& gather, const SpectrumAxes& axes);

}  // namespace velopick::sgs
