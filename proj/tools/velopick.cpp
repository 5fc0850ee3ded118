// SPDX-License-Identifier: Apache-2.0
//
// velopick command line. Exit codes: 1 bad arguments, 2 data errors,
// 3 anything else.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "velopick/core/dataset.hpp"
#include "velopick/core/errors.hpp"
#include "velopick/core/io.hpp"
#include "velopick/core/parallel.hpp"
#include "velopick/enhance.hpp"
#include "velopick/pick.hpp"
#include "velopick/pipeline.hpp"
#include "velopick/sgs.hpp"
#include "velopick/spectrum.hpp"
#include "velopick/synth.hpp"
#include "velopick/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace velopick;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// ---- small file helpers -------------------------------------------------

json axes_json(const SpectrumAxes& a) {
  return {{"t_start", a.time.t_start}, {"dt", a.time.dt},         {"n_t", a.time.n_t},
          {"v_min", a.velocity.v_min}, {"dv", a.velocity.dv}, {"n_v", a.velocity.n_v}};
}

SpectrumAxes axes_from(const json& j) {
  return {TimeAxis(j.at("t_start").get<double>(), j.at("dt").get<double>(), j.at("n_t").get<std::size_t>()),
          VelocityAxis(j.at("v_min").get<double>(), j.at("dv").get<double>(), j.at("n_v").get<std::size_t>())};
}

json curve_json(const VelocityCurve& c) {
  json knots = json::array();
  for (const auto& p : c.points()) knots.push_back({p.t, p.v});
  return knots;
}

VelocityCurve curve_from(const json& j) {
  std::vector<CurvePoint> pts;
  for (const auto& k : j) pts.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
  return VelocityCurve(std::move(pts));
}

json parse_sidecar(const fs::path& file) {
  try {
    return json::parse(read_sidecar(file));
  } catch (const json::exception& e) {
    throw FormatError("sidecar of " + file.string() + ": " + e.what());
  }
}

SpectrumAxes spectrum_axes_of(const fs::path& spec) {
  try {
    return axes_from(parse_sidecar(spec).at("axes"));
  } catch (const json::exception& e) {
    throw FormatError("sidecar of " + spec.string() + ": " + e.what());
  }
}

void write_spectrum(const fs::path& path, const Grid2D& values, const SpectrumAxes& axes) {
  io::write_grid(path, values);
  write_sidecar(path, json{{"axes", axes_json(axes)}}.dump(2));
}

fs::path with_extension(fs::path p, const std::string& ext) {
  p.replace_extension(ext);
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Geometry for a standalone gather file: the manifest of the directory it
/// lives in, else the default acquisition when the trace count matches.
AcquisitionGeometry geometry_for(const fs::path& gather_file, const Grid2D& traces) {
  const fs::path dir = gather_file.has_parent_path() ? gather_file.parent_path() : fs::path(".");
  AcquisitionGeometry g = is_line_dir(dir) ? read_manifest(dir).geometry : synth::default_geometry();
  if (g.traces() != traces.cols() || g.time.n_t != traces.rows())
    throw ShapeError("gather " + gather_file.string() + " is " + std::to_string(traces.rows()) + "x" +
                     std::to_string(traces.cols()) + " but its geometry declares " + std::to_string(g.time.n_t) +
                     "x" + std::to_string(g.traces()));
  return g;
}

synth::LayerModel read_layers(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingFileError("cannot open layer file " + file.string());
  try {
    const json j = json::parse(in);
    synth::LayerModel m;
    m.peak_hz = j.value("peak_hz", 25.0);
    for (const auto& l : j.at("layers"))
      m.layers.push_back({l.at("t_base").get<double>(), l.at("v").get<double>(), l.value("amplitude", 1.0)});
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError("layer file " + file.string() + ": " + e.what());
  }
}

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "none") return synth::kNoNoise;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ConfigError("--snr-db expects a number or 'inf', got '" + s + "'");
  }
}

// ---- options --------------------------------------------------------------

struct AxisOptions {
  double tmin = 0.0, dt = 0.016, vmin = 1400.0, dv = 50.0;
  std::size_t nt = 128, nv = 64;
  void add(CLI::App* app) {
    app->add_option("--tmin", tmin, "first spectrum time (s)");
    app->add_option("--dt", dt, "spectrum time step (s)");
    app->add_option("--nt", nt, "spectrum time samples");
    app->add_option("--vmin", vmin, "first trial velocity (m/s)");
    app->add_option("--dv", dv, "trial velocity step (m/s)");
    app->add_option("--nv", nv, "trial velocities");
  }
  SpectrumAxes axes() const { return {TimeAxis(tmin, dt, nt), VelocityAxis(vmin, dv, nv)}; }
};

struct ModelOptions {
  std::size_t height = 256, width = 128, depth = 4, base = 16;
  bool no_sfe = false, no_sgs = false;
  std::string reference = "labels";
  std::size_t k = sgs::kDefaultWidth;
  std::vector<double> percent = sgs::default_percentages();
  std::size_t iters = 5000, batch = 32, validate_every = 15, patience = 10;
  double lr = 0.01;
  std::uint64_t seed = 0;

  void add(CLI::App* app, bool variants) {
    app->add_option("--height", height, "network input rows");
    app->add_option("--width", width, "network input columns");
    app->add_option("--depth", depth, "U-Net depth");
    app->add_option("--base-channels", base, "channels of the first U-Net stage");
    if (variants) {
      auto* a = app->add_flag("--no-sfe", no_sfe, "raw spectrum channel only, plus SGS");
      auto* b = app->add_flag("--no-sgs", no_sgs, "ten spectrum channels, no SGS encoder");
      a->excludes(b);
    }
    app->add_option("--reference", reference, "SGS reference: mean training label or per-gather scan")
        ->check(CLI::IsMember({"labels", "cvs"}));
    app->add_option("--k", k, "SGS neighbourhood width")->check(CLI::PositiveNumber);
    app->add_option("--percent", percent, "scan percentages")->delimiter(',');
    app->add_option("--iters", iters, "maximum iterations")->check(CLI::PositiveNumber);
    app->add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber);
    app->add_option("--validate-every", validate_every, "iterations between validations")
        ->check(CLI::PositiveNumber);
    app->add_option("--patience", patience, "validations without improvement before stopping")
        ->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "seed for initialisation and shuffling");
  }

  mifn::MifnConfig config(mifn::Variant v) const {
    mifn::MifnConfig c;
    c.height = height;
    c.width = width;
    c.depth = depth;
    c.base_channels = base;
    c.variant = v;
    c.validate();
    return c;
  }
  mifn::Variant variant() const {
    return no_sfe ? mifn::Variant::kNoSfe : no_sgs ? mifn::Variant::kNoSgs : mifn::Variant::kFull;
  }
  pipeline::FeatureOptions features(const fs::path& data, const mifn::MifnConfig& cfg) const {
    pipeline::FeatureOptions o;
    o.k = k;
    o.percentages = percent;
    o.with_sgs = cfg.uses_sgs();
    if (o.with_sgs && reference == "labels")
      o.reference = pipeline::mean_label_curve(data, "train", spectrum::default_axes().time);
    return o;
  }
  train::TrainConfig training() const {
    train::TrainConfig t;
    t.batch_size = batch;
    t.lr = lr;
    t.max_iterations = iters;
    t.validate_every = validate_every;
    t.patience = patience;
    t.seed = seed;
    return t;
  }
};

// ---- subcommands ------------------------------------------------------------

struct SynthCmd {
  std::string layers, out, split, line;
  int ncdp = 21;
  std::string snr = "inf";
  std::uint64_t seed = 0;
  double drift = 0.0, wobble = 0.0;
  bool with_spectra = false;
  AxisOptions axes;

  void add(CLI::App* app) {
    app->add_option("--layers", layers, "layer model JSON (random model from the seed when omitted)")
        ->check(CLI::ExistingFile);
    app->add_option("--ncdp", ncdp, "number of cdps")->check(CLI::PositiveNumber);
    app->add_option("--snr-db", snr, "signal-to-noise ratio in dB, or inf");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--drift", drift, "fractional velocity change per cdp");
    app->add_option("--wobble", wobble, "lateral base-time wobble (s)");
    app->add_option("--split", split, "split recorded in the manifest (train/val/test)");
    app->add_option("--line", line, "line name (defaults to the output directory name)");
    app->add_flag("--spectra", with_spectra, "also compute spectra for every cdp");
    axes.add(app);
    app->add_option("--out", out, "output line directory")->required();
  }

  void run() const {
    synth::LineParams p;
    if (!layers.empty()) {
      p.base = read_layers(layers);
    } else {
      Rng rng(seed);
      p.base = synth::random_layer_model(rng);
    }
    p.geometry = synth::default_geometry();
    p.n_cdp = ncdp;
    p.snr_db = parse_snr(snr);
    p.seed = seed;
    p.drift = drift;
    p.time_wobble = wobble;
    const auto gathers = synth::make_line(p);
    const std::string name = line.empty() ? fs::path(out).filename().string() : line;
    synth::write_line(out, gathers, name, split);
    if (with_spectra) pipeline::compute_line_spectra(out, axes.axes());
    spdlog::info("wrote {} gathers to {}", gathers.size(), out);
  }
};

struct SpectrumCmd {
  std::string gather, line, out;
  int window = spectrum::kDefaultWindowHalf;
  bool pgm = false;
  AxisOptions axes;

  void add(CLI::App* app) {
    auto* g = app->add_option("--gather", gather, "single gather array")->check(CLI::ExistingFile);
    auto* l = app->add_option("--line", line, "line directory")->check(CLI::ExistingDirectory);
    g->excludes(l);
    app->add_option("--window", window, "half window of the semblance sum (samples)")
        ->check(CLI::NonNegativeNumber);
    app->add_flag("--pgm", pgm, "write PGM previews");
    axes.add(app);
    app->add_option("--out", out, "output spectrum file, or line directory with --line")->required();
  }

  void run() const {
    if (gather.empty() == line.empty()) throw ConfigError("spectrum: give exactly one of --gather and --line");
    const SpectrumAxes a = axes.axes();
    if (!gather.empty()) {
      const Grid2D traces = io::read_grid(gather);
      const CmpGather g(geometry_for(gather, traces), traces);
      const auto s = spectrum::semblance(g, a.time, a.velocity, window);
      ensure_parent(out);
      write_spectrum(out, s.values, a);
      if (pgm) io::write_pgm(with_extension(out, ".pgm"), s.values, 0.0f, 1.0f);
      return;
    }
    // Line mode works on a copy unless --out names the line itself.
    const fs::path src = fs::canonical(line);
    fs::create_directories(out);
    const fs::path dst = fs::canonical(out);
    if (src != dst) {
      const LineManifest m = read_manifest(src);
      fs::copy_file(src / "manifest.json", dst / "manifest.json", fs::copy_options::overwrite_existing);
      for (const auto& c : m.cdps) {
        fs::copy_file(src / c.gather, dst / c.gather, fs::copy_options::overwrite_existing);
        if (!c.label.empty()) fs::copy_file(src / c.label, dst / c.label, fs::copy_options::overwrite_existing);
      }
      LineManifest copy = m;
      copy.spectrum_axes.reset();
      for (auto& c : copy.cdps) c.spectrum.clear();
      write_manifest(dst, copy);
    }
    pipeline::compute_line_spectra(dst, a);
    if (pgm) {
      const LineManifest m = read_manifest(dst);
      for (const auto& c : m.cdps)
        io::write_pgm(dst / with_extension(c.spectrum, ".pgm"), io::read_grid(dst / c.spectrum), 0.0f, 1.0f);
    }
  }
};

struct EnhanceCmd {
  std::string spec, out;
  int row = -1;
  bool all = false;

  void add(CLI::App* app) {
    app->add_option("--spec", spec, "spectrum array")->required()->check(CLI::ExistingFile);
    auto* r = app->add_option("--row", row, "parameter row 0..8")->check(CLI::Range(0, 8));
    auto* a = app->add_flag("--all", all, "all nine rows plus the original (ten-channel stack)");
    r->excludes(a);
    app->add_option("--out", out, "output directory")->required();
  }

  void run() const {
    if (row < 0 && !all) throw ConfigError("enhance: give --row N or --all");
    const Grid2D s = io::read_grid(spec);
    fs::create_directories(out);
    auto emit = [&](const Grid2D& g, const std::string& name) {
      io::write_grid(fs::path(out) / (name + ".vpk"), g);
      io::write_pgm(fs::path(out) / (name + ".pgm"), g, 0.0f, 1.0f);
    };
    if (all) {
      const auto stack = enhance::multiscale_stack(s);
      emit(stack[0], "original");
      for (std::size_t i = 1; i < stack.size(); ++i) emit(stack[i], "row" + std::to_string(i - 1));
      io::write_grids(fs::path(out) / "stack.vpk", stack);
    } else {
      emit(enhance::enhance(s, enhance::parameter_rows()[static_cast<std::size_t>(row)]),
           "row" + std::to_string(row));
    }
  }
};

struct SgsCmd {
  std::string line, out, reference;
  int cdp = 0;
  std::size_t k = sgs::kDefaultWidth;
  std::vector<double> percent = sgs::default_percentages();

  void add(CLI::App* app) {
    app->add_option("--line", line, "line directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--cdp", cdp, "cdp number (as listed in the manifest)")->required();
    app->add_option("--k", k, "neighbourhood width")->check(CLI::PositiveNumber);
    app->add_option("--percent", percent, "scan percentages")->delimiter(',');
    app->add_option("--reference", reference, "reference curve CSV (constant-velocity scan when omitted)")
        ->check(CLI::ExistingFile);
    app->add_option("--out", out, "output pack file")->required();
  }

  void run() const {
    const auto data = pipeline::load_line(line);
    const auto& cdps = data.manifest.cdps;
    const auto it = std::find_if(cdps.begin(), cdps.end(), [&](const CdpEntry& e) { return e.cdp == cdp; });
    if (it == cdps.end()) throw ConfigError("sgs: cdp " + std::to_string(cdp) + " is not on line " + line);
    pipeline::FeatureOptions o;
    o.k = k;
    o.percentages = percent;
    if (!reference.empty()) o.reference = io::read_curve_csv(reference);
    const auto pack = pipeline::build_pack(data, static_cast<std::size_t>(it - cdps.begin()), o);
    ensure_parent(out);
    io::write_grids(out, pack.slices);
    json curves = json::array();
    for (const auto& c : pack.curves) curves.push_back(curve_json(c));
    write_sidecar(out, json{{"k", pack.k}, {"reference", curve_json(pack.reference)}, {"curves", curves}}.dump(2));
  }
};

sgs::SgsPack read_pack(const fs::path& file) {
  sgs::SgsPack p;
  p.slices = io::read_grids(file);
  try {
    const json j = parse_sidecar(file);
    p.k = j.at("k").get<std::size_t>();
    p.reference = curve_from(j.at("reference"));
    for (const auto& c : j.at("curves")) p.curves.push_back(curve_from(c));
  } catch (const json::exception& e) {
    throw FormatError("pack sidecar of " + file.string() + ": " + e.what());
  }
  if (p.curves.size() != p.slices.size())
    throw FormatError("pack " + file.string() + " holds " + std::to_string(p.slices.size()) + " slices but " +
                      std::to_string(p.curves.size()) + " curves");
  return p;
}

struct TrainCmd {
  std::string data, out, init, history;
  ModelOptions model;

  void add(CLI::App* app) {
    app->add_option("--data", data, "directory of line directories (splits train and val)")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--init", init, "pretrained weights to fine-tune")->check(CLI::ExistingFile);
    app->add_option("--history", history, "loss history CSV (default: <out>.history.csv)");
    model.add(app, true);
    app->add_option("--out", out, "output weights file")->required();
  }

  void run() const {
    auto cfg = model.config(model.variant());
    auto opts = model.features(data, cfg);
    if (!init.empty()) {
      // Fine-tuning keeps the pretrained architecture and feature options.
      std::tie(cfg, opts) = pipeline::read_model_sidecar(init);
      if (cfg.uses_sgs() && !opts.reference && model.reference == "labels")
        opts.reference = pipeline::mean_label_curve(data, "train", spectrum::default_axes().time);
    }
    const auto tr = pipeline::load_split(data, "train", cfg, opts);
    const auto va = pipeline::load_split(data, "val", cfg, opts);
    mifn::Mifn<float> net(cfg, model.seed);
    if (!init.empty()) net.load(init);
    const auto result = train::fit(net, tr.samples, va.samples, model.training(), [](const train::HistoryRow& r) {
      spdlog::info("iter {} train {:.5f} val {:.5f}", r.iter, r.train_bce, r.val_bce);
    });
    ensure_parent(out);
    net.save(out);
    pipeline::write_model_sidecar(out, cfg, opts);
    train::write_history(history.empty() ? fs::path(out + ".history.csv") : fs::path(history), result.history);
    spdlog::info("best validation {:.5f} at iteration {}", result.best_val, result.best_iter);
  }
};

struct Model {
  std::unique_ptr<mifn::Mifn<float>> net;
  pipeline::FeatureOptions opts;
};

Model load_model(const fs::path& weights) {
  auto [cfg, opts] = pipeline::read_model_sidecar(weights);
  Model m{std::make_unique<mifn::Mifn<float>>(cfg, 0), opts};
  m.net->load(weights);
  return m;
}

void add_pick_options(CLI::App* app, pick::PickConfig& cfg) {
  app->add_option("--t-t", cfg.t_t, "regression span at each end (s); default 10% of the axis");
  app->add_flag("--naive", cfg.naive_extrapolation, "two-point extrapolation instead of least squares");
  app->add_option("--floor", cfg.floor, "activation floor for picked rows");
}

struct PickCmd {
  std::string model, spec, pack, out, curve, line;
  pick::PickConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--model", model, "weights file")->required()->check(CLI::ExistingFile);
    auto* s = app->add_option("--spec", spec, "spectrum array with axes sidecar")->check(CLI::ExistingFile);
    app->add_option("--sgs", pack, "SGS pack from 'velopick sgs'")->check(CLI::ExistingFile);
    auto* l = app->add_option("--line", line, "pick every cdp of a line")->check(CLI::ExistingDirectory);
    s->excludes(l);
    app->add_option("--curve", curve, "picked curve CSV (single spectrum mode)");
    add_pick_options(app, cfg);
    app->add_option("--out", out, "segmentation map, or output directory with --line")->required();
  }

  void run() const {
    if (spec.empty() == line.empty()) throw ConfigError("pick: give exactly one of --spec and --line");
    Model m = load_model(model);
    if (!spec.empty()) {
      const SpectrumAxes axes = spectrum_axes_of(spec);
      std::optional<sgs::SgsPack> p;
      if (m.net->config().uses_sgs()) {
        if (pack.empty()) throw ConfigError("pick: model variant needs --sgs");
        p = read_pack(pack);
      }
      const auto f = pipeline::build_features(io::read_grid(spec), axes, std::move(p), m.opts);
      const Grid2D seg = pipeline::segment(*m.net, f);
      ensure_parent(out);
      io::write_grid(out, seg);
      if (!curve.empty()) {
        ensure_parent(curve);
        io::write_curve_csv(curve, pipeline::pick_curve(*m.net, f, cfg));
      }
      return;
    }
    const auto data = pipeline::load_line(line);
    fs::create_directories(out);
    m.opts.with_sgs = m.net->config().uses_sgs();
    for (std::size_t i = 0; i < data.gathers.size(); ++i) {
      const auto f = pipeline::build_features(data, i, m.opts);
      const std::string id = format_index(data.manifest.cdps[i].cdp);
      io::write_grid(fs::path(out) / ("seg_" + id + ".vpk"), pipeline::segment(*m.net, f));
      io::write_curve_csv(fs::path(out) / ("curve_" + id + ".csv"), pipeline::pick_curve(*m.net, f, cfg));
    }
  }
};

std::vector<VelocityCurve> read_line_curves(const fs::path& dir, const LineManifest& m) {
  std::vector<VelocityCurve> curves;
  for (const auto& c : m.cdps) curves.push_back(io::read_curve_csv(dir / ("curve_" + format_index(c.cdp) + ".csv")));
  return curves;
}

struct QcCmd {
  std::string line, curves, out;

  void add(CLI::App* app) {
    app->add_option("--line", line, "line directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--curves", curves, "directory of curve_XXXX.csv files")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--out", out, "report directory")->required();
  }

  void run() const {
    const LineManifest m = read_manifest(line);
    std::vector<CmpGather> gathers;
    for (std::size_t i = 0; i < m.cdps.size(); ++i) gathers.push_back(load_gather(line, m, i));
    const auto picked = read_line_curves(curves, m);
    const auto report = pick::qc(gathers, picked);
    const TimeAxis axis = m.spectrum_axes ? m.spectrum_axes->time : spectrum::default_axes().time;

    fs::create_directories(out);
    std::ofstream metrics(fs::path(out) / "metrics.csv");
    metrics.precision(9);
    metrics << "cdp,vmae,stack_power\n";
    for (std::size_t i = 0; i < m.cdps.size(); ++i) {
      metrics << m.cdps[i].cdp << ',';
      if (auto label = load_label(line, m, i)) metrics << pick::vmae(picked[i], *label, axis);
      double power = 0.0;
      for (std::size_t r = 0; r < report.stacked_section.rows(); ++r) {
        const double s = report.stacked_section(r, i);
        power += s * s;
      }
      metrics << ',' << power << '\n';
    }
    std::ofstream series(fs::path(out) / "stack_power.csv");
    series.precision(9);
    series << "t_s,power\n";
    for (std::size_t r = 0; r < report.stack_power.size(); ++r)
      series << m.geometry.time.time(r) << ',' << report.stack_power[r] << '\n';
    io::write_grid(fs::path(out) / "section.vpk", report.stacked_section);
    const float peak = std::max(std::abs(report.stacked_section.min_value()), std::abs(report.stacked_section.max_value()));
    io::write_pgm(fs::path(out) / "section.pgm", report.stacked_section, -peak, peak);
  }
};

struct VelfieldCmd {
  std::string line, curves, out;

  void add(CLI::App* app) {
    app->add_option("--line", line, "line directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--curves", curves, "directory of curve_XXXX.csv files")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--out", out, "velocity field array (a .pgm preview is written alongside)")->required();
  }

  void run() const {
    const LineManifest m = read_manifest(line);
    const TimeAxis axis = m.spectrum_axes ? m.spectrum_axes->time : spectrum::default_axes().time;
    const Grid2D field = pick::velfield(read_line_curves(curves, m), axis);
    ensure_parent(out);
    io::write_grid(out, field);
    io::write_pgm(with_extension(out, ".pgm"), field);
  }
};

struct AblateCmd {
  std::string data, out, models;
  ModelOptions model;

  void add(CLI::App* app) {
    app->add_option("--data", data, "directory of line directories (splits train, val and test)")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--models", models, "directory to keep the trained weights");
    model.add(app, false);
    app->add_option("--out", out, "VMAE comparison CSV")->required();
  }

  void run() const {
    struct Row {
      std::string name;
      double vmae;
    };
    std::vector<Row> rows;
    auto run_variant = [&](mifn::Variant v, const std::string& name, bool naive_too) {
      const auto cfg = model.config(v);
      const auto opts = model.features(data, cfg);
      const auto tr = pipeline::load_split(data, "train", cfg, opts);
      const auto va = pipeline::load_split(data, "val", cfg, opts);
      const auto te = pipeline::load_split(data, "test", cfg, opts, true);
      mifn::Mifn<float> net(cfg, model.seed);
      train::fit(net, tr.samples, va.samples, model.training());
      if (!models.empty()) {
        fs::create_directories(models);
        const fs::path w = fs::path(models) / (mifn::variant_name(v) + ".mifnw");
        net.save(w);
        pipeline::write_model_sidecar(w, cfg, opts);
      }
      rows.push_back({name, pipeline::mean_vmae(net, te)});
      spdlog::info("{}: VMAE {:.3f}", name, rows.back().vmae);
      if (naive_too) {
        pick::PickConfig naive;
        naive.naive_extrapolation = true;
        return pipeline::mean_vmae(net, te, naive);
      }
      return 0.0;
    };
    const double naive = run_variant(mifn::Variant::kFull, "full", true);
    run_variant(mifn::Variant::kNoSfe, "w/o SFE", false);
    run_variant(mifn::Variant::kNoSgs, "w/o SGS", false);
    rows.push_back({"naive-postproc", naive});

    ensure_parent(out);
    std::ofstream csv(out);
    csv.precision(9);
    csv << "variant,vmae\n";
    for (const auto& r : rows) csv << r.name << ',' << r.vmae << '\n';
  }
};

// ---- config file --------------------------------------------------------------

const std::vector<std::string> kSubcommands = {"synth", "pick", "train", "sgs",     "enhance",
                                               "spectrum", "qc", "velfield", "ablate"};

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Expands `--config file.json` into ordinary arguments. Top-level keys and
/// keys of the object named after the subcommand become `--key value`
/// pairs; anything already on the command line wins.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string config, sub;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    if (sub.empty() && std::find(kSubcommands.begin(), kSubcommands.end(), args[i]) != kSubcommands.end()) {
      sub = args[i];
      sub_pos = i;
    }
  }
  if (config.empty()) return args;
  std::ifstream in(config);
  if (!in) throw CLI::FileError::Missing(config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CLI::ConversionError("config " + config + ": " + e.what());
  }
  if (!j.is_object()) throw CLI::ConversionError("config " + config + " must hold a JSON object");

  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> global, local;
  auto emit = [&](const std::string& key, const json& v, std::vector<std::string>& dst) {
    if (given(key)) return;
    if (v.is_boolean()) {
      if (v.get<bool>()) dst.push_back("--" + key);
      return;
    }
    dst.push_back("--" + key);
    if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) joined += (joined.empty() ? "" : ",") + json_scalar(e);
      dst.push_back(joined);
    } else {
      dst.push_back(json_scalar(v));
    }
  };
  for (const auto& [key, v] : j.items()) {
    if (v.is_object()) {
      if (key == sub)
        for (const auto& [k2, v2] : v.items()) emit(k2, v2, local);
    } else if (key == "threads") {
      emit(key, v, global);
    } else if (std::find(kSubcommands.begin(), kSubcommands.end(), key) == kSubcommands.end()) {
      emit(key, v, local);
    }
  }
  std::vector<std::string> out(args.begin(), args.begin() + 1);
  out.insert(out.end(), global.begin(), global.end());
  out.insert(out.end(), args.begin() + 1, args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_pos + 1, args.size())));
  if (sub_pos < args.size()) {
    out.insert(out.end(), local.begin(), local.end());
    out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), args.end());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"velopick: velocity picking from semblance spectra"};
  app.require_subcommand(1);
  int threads = 0;
  std::string config;
  bool verbose = false;
  app.add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", config, "JSON file supplying default flags");
  app.add_flag("-v,--verbose", verbose, "progress messages");

  SynthCmd synth_cmd;
  SpectrumCmd spectrum_cmd;
  EnhanceCmd enhance_cmd;
  SgsCmd sgs_cmd;
  TrainCmd train_cmd;
  PickCmd pick_cmd;
  QcCmd qc_cmd;
  VelfieldCmd velfield_cmd;
  AblateCmd ablate_cmd;
  auto* s_synth = app.add_subcommand("synth", "synthetic line of CMP gathers with truth curves");
  auto* s_spectrum = app.add_subcommand("spectrum", "semblance velocity spectra");
  auto* s_enhance = app.add_subcommand("enhance", "enhanced spectra / multi-scale stack");
  auto* s_sgs = app.add_subcommand("sgs", "stacked gather slices for one cdp");
  auto* s_train = app.add_subcommand("train", "train a network");
  auto* s_pick = app.add_subcommand("pick", "segment spectra and pick velocity curves");
  auto* s_qc = app.add_subcommand("qc", "NMO stack quality control of picked curves");
  auto* s_velfield = app.add_subcommand("velfield", "velocity field of a line");
  auto* s_ablate = app.add_subcommand("ablate", "train the ablation variants and compare test VMAE");
  synth_cmd.add(s_synth);
  spectrum_cmd.add(s_spectrum);
  enhance_cmd.add(s_enhance);
  sgs_cmd.add(s_sgs);
  train_cmd.add(s_train);
  pick_cmd.add(s_pick);
  qc_cmd.add(s_qc);
  velfield_cmd.add(s_velfield);
  ablate_cmd.add(s_ablate);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitUsage;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("velopick"));
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  if (threads > 0) set_max_threads(threads);

  try {
    if (*s_synth) synth_cmd.run();
    else if (*s_spectrum) spectrum_cmd.run();
    else if (*s_enhance) enhance_cmd.run();
    else if (*s_sgs) sgs_cmd.run();
    else if (*s_train) train_cmd.run();
    else if (*s_pick) pick_cmd.run();
    else if (*s_qc) qc_cmd.run();
    else if (*s_velfield) velfield_cmd.run();
    else if (*s_ablate) ablate_cmd.run();
  } catch (const DataError& e) {
    std::fprintf(stderr, "velopick: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "velopick: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
