// SPDX-License-Identifier: Apache-2.0

#include "velopick/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "velopick/core/errors.hpp"
#include "velopick/core/io.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/core/resample.hpp"
#include "velopick/enhance.hpp"
#include "velopick/train.hpp"

namespace velopick::pipeline {

namespace fs = std::filesystem;

LineData load_line(const fs::path& dir, const SpectrumAxes& fallback_axes) {
  LineData d;
  d.dir = dir;
  d.manifest = read_manifest(dir);
  d.axes = d.manifest.spectrum_axes.value_or(fallback_axes);
  const std::size_t n = d.manifest.cdps.size();
  d.gathers.resize(n);
  d.spectra.resize(n);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.gathers[i] = load_gather(dir, d.manifest, i);
    d.labels[i] = load_label(dir, d.manifest, i);
  }
  parallel_for(n, [&](std::size_t i) {
    const auto& entry = d.manifest.cdps[i];
    if (d.manifest.spectrum_axes && !entry.spectrum.empty())
      d.spectra[i] = io::read_grid(dir / entry.spectrum);
    else
      d.spectra[i] = spectrum::semblance(d.gathers[i], d.axes.time, d.axes.velocity).values;
  });
  return d;
}

void compute_line_spectra(const fs::path& dir, const SpectrumAxes& axes) {
  LineManifest m = read_manifest(dir);
  std::vector<Grid2D> spectra(m.cdps.size());
  parallel_for(m.cdps.size(), [&](std::size_t i) {
    spectra[i] = spectrum::semblance(load_gather(dir, m, i), axes.time, axes.velocity).values;
  });
  for (std::size_t i = 0; i < m.cdps.size(); ++i) {
    m.cdps[i].spectrum = "spectrum_" + format_index(m.cdps[i].cdp) + ".vpk";
    io::write_grid(dir / m.cdps[i].spectrum, spectra[i]);
  }
  m.spectrum_axes = axes;
  write_manifest(dir, m);
}

sgs::SgsPack build_pack(const LineData& line, std::size_t index, const FeatureOptions& opts) {
  const auto idx = sgs::neighbourhood(index, line.gathers.size(), opts.k);
  std::vector<CmpGather> hood;
  hood.reserve(idx.size());
  for (auto i : idx) hood.push_back(line.gathers[i]);
  const VelocityCurve reference =
      opts.reference ? *opts.reference : sgs::reference_from_cvs(line.gathers[index], line.axes);
  return sgs::build_sgs(hood, sgs::scan_curves(reference, opts.percentages), reference);
}

Features build_features(const Grid2D& spectrum, const SpectrumAxes& axes, std::optional<sgs::SgsPack> pack,
                        const FeatureOptions& opts) {
  if (spectrum.rows() != axes.time.n_t || spectrum.cols() != axes.velocity.n_v)
    throw ShapeError("spectrum is " + std::to_string(spectrum.rows()) + "x" + std::to_string(spectrum.cols()) +
                     ", axes declare " + std::to_string(axes.time.n_t) + "x" + std::to_string(axes.velocity.n_v));
  Features f;
  f.axes = axes;
  f.stack = enhance::multiscale_stack(spectrum);
  if (pack) {
    const std::size_t h = opts.mask_rows ? opts.mask_rows : axes.time.n_t / 2;
    for (const auto& c : pack->curves) f.masks.push_back(sgs::rasterize_vc(c, axes, h).mask);
    f.pack = std::move(pack);
  }
  return f;
}

Features build_features(const LineData& line, std::size_t index, const FeatureOptions& opts) {
  std::optional<sgs::SgsPack> pack;
  if (opts.with_sgs) pack = build_pack(line, index, opts);
  return build_features(line.spectra.at(index), line.axes, std::move(pack), opts);
}

mifn::Sample make_sample(const Features& f, const mifn::MifnConfig& cfg, const std::optional<VelocityCurve>& label) {
  mifn::Sample s;
  for (const auto& g : f.stack) s.spectrum.push_back(resize_bilinear(g, cfg.height, cfg.width));
  if (cfg.uses_sgs()) {
    if (!f.pack) throw ConfigError("model variant " + mifn::variant_name(cfg.variant) + " needs SGS features");
    s.slices = f.pack->slices;
    for (const auto& m : f.masks) s.masks.push_back(resize_bilinear(m, cfg.height, cfg.width));
  }
  if (label) s.label = resize_bilinear(train::soft_label(*label, f.axes), cfg.height, cfg.width);
  return s;
}

Grid2D segment(mifn::Mifn<float>& net, const Features& f) {
  const auto sample = make_sample(f, net.config());
  return resize_bilinear(mifn::predict(net, sample), f.axes.time.n_t, f.axes.velocity.n_v);
}

LabeledSet load_split(const fs::path& root, const std::string& split, const mifn::MifnConfig& cfg,
                      const FeatureOptions& opts, bool keep_features) {
  LabeledSet out;
  for (const auto& dir : find_lines(root)) {
    const LineManifest m = read_manifest(dir);
    if (!split.empty() && m.split != split) continue;
    const LineData line = load_line(dir);
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < line.labels.size(); ++i)
      if (line.labels[i]) labeled.push_back(i);
    std::vector<Features> feats(labeled.size());
    std::vector<mifn::Sample> samples(labeled.size());
    parallel_for(labeled.size(), [&](std::size_t j) {
      feats[j] = build_features(line, labeled[j], opts);
      samples[j] = make_sample(feats[j], cfg, line.labels[labeled[j]]);
    });
    for (std::size_t j = 0; j < labeled.size(); ++j) {
      out.samples.push_back(std::move(samples[j]));
      out.labels.push_back(*line.labels[labeled[j]]);
      out.ids.push_back(m.line + "/" + format_index(m.cdps[labeled[j]].cdp));
      if (keep_features) out.features.push_back(std::move(feats[j]));
    }
  }
  return out;
}

VelocityCurve pick_curve(mifn::Mifn<float>& net, const Features& f, const pick::PickConfig& cfg) {
  try {
    return pick::segmentation_to_curve(segment(net, f), f.axes, cfg);
  } catch (const EmptyPickError&) {
    spdlog::warn("pick: segmentation map is empty, falling back to the reference curve");
    if (f.pack) return f.pack->reference;
    const double v = f.axes.velocity.velocity(f.axes.velocity.n_v / 2);
    return VelocityCurve({{f.axes.time.t_start, v}, {f.axes.time.t_end(), v}});
  }
}

double mean_vmae(mifn::Mifn<float>& net, const LabeledSet& set, const pick::PickConfig& cfg) {
  if (set.features.size() != set.labels.size() || set.labels.empty())
    throw ConfigError("mean_vmae: the set must hold features for every label");
  double s = 0.0;
  for (std::size_t i = 0; i < set.labels.size(); ++i)
    s += pick::vmae(pick_curve(net, set.features[i], cfg), set.labels[i], set.features[i].axes.time);
  return s / static_cast<double>(set.labels.size());
}

VelocityCurve mean_label_curve(const fs::path& root, const std::string& split, const TimeAxis& axis) {
  std::vector<VelocityCurve> labels;
  for (const auto& dir : find_lines(root)) {
    const LineManifest m = read_manifest(dir);
    if (!split.empty() && m.split != split) continue;
    for (std::size_t i = 0; i < m.cdps.size(); ++i)
      if (auto l = load_label(dir, m, i)) labels.push_back(std::move(*l));
  }
  if (labels.empty()) throw ConfigError("no labeled cdps under " + root.string() + " for split '" + split + "'");
  return sgs::reference_from_labels(labels, axis);
}

void write_model_sidecar(const fs::path& weights, const mifn::MifnConfig& cfg, const FeatureOptions& opts) {
  nlohmann::json j = {{"height", cfg.height},
                      {"width", cfg.width},
                      {"depth", cfg.depth},
                      {"base_channels", cfg.base_channels},
                      {"cbl_channels1", cfg.cbl_channels1},
                      {"cbl_channels2", cfg.cbl_channels2},
                      {"cbl_kernel", {cfg.cbl_kh, cfg.cbl_kw}},
                      {"cbl_stride", {cfg.cbl_sh, cfg.cbl_sw}},
                      {"leaky_slope", cfg.leaky_slope},
                      {"variant", mifn::variant_name(cfg.variant)},
                      {"k", opts.k},
                      {"percentages", opts.percentages},
                      {"mask_rows", opts.mask_rows}};
  if (opts.reference) {
    nlohmann::json knots = nlohmann::json::array();
    for (const auto& p : opts.reference->points()) knots.push_back({p.t, p.v});
    j["reference"] = knots;
  }
  write_sidecar(weights, j.dump(2));
}

std::pair<mifn::MifnConfig, FeatureOptions> read_model_sidecar(const fs::path& weights) {
  try {
    const auto j = nlohmann::json::parse(read_sidecar(weights));
    mifn::MifnConfig cfg;
    cfg.height = j.at("height").get<std::size_t>();
    cfg.width = j.at("width").get<std::size_t>();
    cfg.depth = j.at("depth").get<std::size_t>();
    cfg.base_channels = j.at("base_channels").get<std::size_t>();
    cfg.cbl_channels1 = j.at("cbl_channels1").get<std::size_t>();
    cfg.cbl_channels2 = j.at("cbl_channels2").get<std::size_t>();
    if (j.contains("cbl_kernel")) {
      cfg.cbl_kh = j["cbl_kernel"].at(0).get<std::size_t>();
      cfg.cbl_kw = j["cbl_kernel"].at(1).get<std::size_t>();
    }
    if (j.contains("cbl_stride")) {
      cfg.cbl_sh = j["cbl_stride"].at(0).get<std::size_t>();
      cfg.cbl_sw = j["cbl_stride"].at(1).get<std::size_t>();
    }
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.variant = mifn::parse_variant(j.at("variant").get<std::string>());
    FeatureOptions opts;
    opts.k = j.at("k").get<std::size_t>();
    opts.percentages = j.at("percentages").get<std::vector<double>>();
    opts.mask_rows = j.at("mask_rows").get<std::size_t>();
    opts.with_sgs = cfg.uses_sgs();
    if (j.contains("reference")) {
      std::vector<CurvePoint> pts;
      for (const auto& k : j["reference"]) pts.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
      opts.reference = VelocityCurve(std::move(pts));
    }
    return {cfg, opts};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model sidecar for " + weights.string() + ": " + e.what());
  }
}

}  // namespace velopick::pipeline
