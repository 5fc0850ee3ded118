// SPDX-License-Identifier: Apache-2.0
//
// Glue between the stages: loading lines, building network inputs for one
// cdp, and turning network output back into a curve on the spectrum grid.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "velopick/core/dataset.hpp"
#include "velopick/mifn.hpp"
#include "velopick/pick.hpp"
#include "velopick/sgs.hpp"
#include "velopick/spectrum.hpp"

namespace velopick::pipeline {

struct FeatureOptions {
  std::size_t k = sgs::kDefaultWidth;
  std::vector<double> percentages = sgs::default_percentages();
  /// Coarse rows of the VC-mask grid; 0 selects half the spectrum rows.
  std::size_t mask_rows = 0;
  bool with_sgs = true;
  /// Regional reference for the scanned curves (mean training label). When
  /// unset, each cdp uses a constant-velocity scan of its own gather.
  std::optional<VelocityCurve> reference;
};

/// Mean of the label curves found under `root` (split filter as in
/// load_split), sampled on `axis`. Throws ConfigError when there are none.
VelocityCurve mean_label_curve(const std::filesystem::path& root, const std::string& split, const TimeAxis& axis);

struct LineData {
  std::filesystem::path dir;
  LineManifest manifest;
  SpectrumAxes axes;
  std::vector<CmpGather> gathers;
  std::vector<Grid2D> spectra;
  std::vector<std::optional<VelocityCurve>> labels;
};

/// Loads gathers, spectra and labels of a line directory. Spectra missing
/// from the manifest are computed on `fallback_axes` (not written back).
LineData load_line(const std::filesystem::path& dir, const SpectrumAxes& fallback_axes = spectrum::default_axes());

/// Computes every cdp's spectrum, writes spectrum_XXXX.vpk files and records
/// them with their axes in the manifest.
void compute_line_spectra(const std::filesystem::path& dir, const SpectrumAxes& axes);

/// Everything the network needs for one spectrum location, on the spectrum grid.
struct Features {
  SpectrumAxes axes;
  std::vector<Grid2D> stack;  // multi-scale stack, 10 channels
  std::optional<sgs::SgsPack> pack;
  std::vector<Grid2D> masks;  // one per scanned curve
};

Features build_features(const LineData& line, std::size_t index, const FeatureOptions& opts = {});
/// From a spectrum and a prebuilt SGS pack (standalone files).
Features build_features(const Grid2D& spectrum, const SpectrumAxes& axes, std::optional<sgs::SgsPack> pack,
                        const FeatureOptions& opts = {});
sgs::SgsPack build_pack(const LineData& line, std::size_t index, const FeatureOptions& opts = {});

/// Resizes features (and the optional label's soft mask) to the model's H x W.
mifn::Sample make_sample(const Features& f, const mifn::MifnConfig& cfg,
                         const std::optional<VelocityCurve>& label = std::nullopt);

/// Eval-mode prediction resized back to the spectrum grid.
Grid2D segment(mifn::Mifn<float>& net, const Features& f);

struct LabeledSet {
  std::vector<mifn::Sample> samples;
  std::vector<VelocityCurve> labels;
  std::vector<Features> features;  // kept only when requested
  std::vector<std::string> ids;    // "<line>/<cdp>"
};

/// Every labeled cdp of the lines under `root` whose manifest split equals
/// `split` (empty = all).
LabeledSet load_split(const std::filesystem::path& root, const std::string& split, const mifn::MifnConfig& cfg,
                      const FeatureOptions& opts, bool keep_features = false);

/// Segments and picks one location. When no row reaches the activation
/// floor the SGS reference curve is returned instead (or, without a pack, a
/// constant at the middle of the velocity axis) and a warning is logged.
VelocityCurve pick_curve(mifn::Mifn<float>& net, const Features& f, const pick::PickConfig& cfg = {});

/// Mean VMAE of pick_curve against the labels; `set` must hold features.
double mean_vmae(mifn::Mifn<float>& net, const LabeledSet& set, const pick::PickConfig& cfg = {});

/// Network config and feature options stored next to a weights file.
void write_model_sidecar(const std::filesystem::path& weights, const mifn::MifnConfig& cfg,
                         const FeatureOptions& opts);
std::pair<mifn::MifnConfig, FeatureOptions> read_model_sidecar(const std::filesystem::path& weights);

}  // namespace velopick::pipeline
