// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "gradcheck.hpp"
#include "tmpdir.hpp"
#include "velopick/ag/layers.hpp"
#include "velopick/enhance.hpp"
#include "velopick/pipeline.hpp"
#include "velopick/synth.hpp"
#include "velopick/train.hpp"

using namespace velopick;
namespace fs = std::filesystem;

namespace {

// Desk-scale training setup for criteria 8, 10 and 11.
constexpr std::size_t kHeight = 128, kWidth = 64, kBase = 8;
std::size_t iterations = 300;  // --iterations N overrides
constexpr std::uint64_t kNetSeed = 7, kShuffleSeed = 5;

int failures = 0;
std::set<int> expected_failures;  // --expect-fail 2,8: printed as FAIL but not counted

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  const bool known = !ok && expected_failures.contains(id);
  std::printf("[%s] %2d %s: %s%s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(),
              known ? " (known failure)" : "");
  std::fflush(stdout);
  if (!ok && !known) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

void semblance_argmax() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto geom = synth::default_geometry();
  const auto axes = spectrum::default_axes();
  Rng rng(2002);
  int hits = 0;
  for (int i = 0; i < 50; ++i) {
    synth::LayerModel m;
    const double t = rng.uniform(0.25, 1.8), v = rng.uniform(1600.0, 4200.0);
    m.layers = {{t, v, 1.0}};
    const auto g = synth::make_gather(m, geom, synth::kNoNoise, rng);
    const auto s = spectrum::semblance(g.gather, axes.time, axes.velocity);
    const auto& vals = s.values.values();
    const std::size_t best = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    const long dr = static_cast<long>(best / axes.velocity.n_v) - static_cast<long>(axes.time.nearest(t));
    const long dc = static_cast<long>(best % axes.velocity.n_v) - static_cast<long>(axes.velocity.nearest(v));
    hits += std::abs(dr) <= 1 && std::abs(dc) <= 1;
  }
  const double secs = seconds_since(t0);
  report(2, hits >= 48 && secs < 60.0, "semblance correctness", fmt("%d/50 argmax within one cell, %.1f s", hits, secs));
}

void semblance_bounds() {
  const AcquisitionGeometry geom(
      [] {
        std::vector<double> o;
        for (int i = 0; i < 12; ++i) o.push_back(100.0 + 250.0 * i);
        return o;
      }(),
      TimeAxis(0.0, 0.004, 256));
  const TimeAxis ta(0.0, 0.032, 32);
  const VelocityAxis va(1500.0, 150.0, 16);
  Rng rng(3003);
  double lo = 1.0, hi = 0.0, worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Grid2D d(256, 12);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    for (float& x : d.values()) x = static_cast<float>(rng.normal() * scale);
    if (i % 3 == 0)  // some gathers with a coherent event on top of the noise
      for (std::size_t c = 0; c < 12; ++c) d(static_cast<std::size_t>(60 + c * c / 8), c) += static_cast<float>(5 * scale);
    const CmpGather g(geom, d);
    const auto base = spectrum::semblance(g, ta, va).values;
    lo = std::min<double>(lo, base.min_value());
    hi = std::max<double>(hi, base.max_value());
    for (float a : {0.1f, 10.0f}) {
      Grid2D scaled = d;
      for (float& x : scaled.values()) x *= a;
      const auto s = spectrum::semblance(CmpGather(geom, scaled), ta, va).values;
      for (std::size_t k = 0; k < s.size(); ++k)
        worst = std::max<double>(worst, std::abs(s.values()[k] - base.values()[k]));
    }
  }
  report(3, lo >= 0.0 && hi <= 1.0 && worst <= 1e-5, "semblance bounds and scale invariance",
         fmt("NE in [%.3g, %.3g], max |NE(af) - NE(f)| = %.2g over 1000 gathers", lo, hi, worst));
}

void enhancement() {
  const auto& rows = enhance::parameter_rows();
  const int ws[] = {5, 5, 5, 10, 10, 10, 15, 15, 15};
  const int st[] = {1, 2, 3, 1, 2, 3, 1, 2, 3};
  const double eec[] = {1, 1.5, 2, 1, 1.5, 2, 1, 1.5, 2};
  const int ln[] = {5, 8, 12, 5, 8, 12, 5, 8, 12};
  bool table = rows.size() == 9;
  for (std::size_t i = 0; table && i < 9; ++i)
    table = rows[i].ws == ws[i] && rows[i].st == st[i] && rows[i].eec == eec[i] && rows[i].ln == ln[i];

  Rng rng(4004);
  Grid2D g(96, 40);
  for (float& x : g.values()) x = static_cast<float>(rng.uniform());
  g(5, 5) = 1.0f;
  const bool identity = enhance::enhance(g, {1, 1, 1.0, 1, 0.0, 1.0}) == g;

  int preserved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto& p = rows[static_cast<std::size_t>(trial % 9)];
    Grid2D s(64, 24);
    for (float& x : s.values()) x = static_cast<float>(rng.uniform());
    enhance::smooth_columns(s, p.ws, p.st);
    Grid2D h = s;
    enhance::power_inflate(h, p.eec);
    enhance::normalize_layers(h, p.ln);
    bool ok = true;
    const std::size_t n = static_cast<std::size_t>(p.ln);
    std::size_t start = 0;
    for (std::size_t l = 0; l < n; ++l) {
      const std::size_t end = start + s.rows() / n + (l < s.rows() % n ? 1 : 0);
      for (std::size_t c = 0; c < s.cols(); ++c) {
        std::size_t a = start, b = start;
        for (std::size_t r = start; r < end; ++r) {
          if (s(r, c) > s(a, c)) a = r;
          if (h(r, c) > h(b, c)) b = r;
        }
        ok = ok && a == b;
      }
      start = end;
    }
    preserved += ok;
  }
  report(4, table && identity && preserved == 100, "enhancement",
         fmt("table %s, identity row %s, argmax kept on %d/100 spectra", table ? "exact" : "WRONG",
             identity ? "no-op" : "CHANGES DATA", preserved));
}

void autograd() {
  using ag::Tensor;
  using gradcheck::random_tensor;
  using gradcheck::relative_errors;
  Rng rng(5005);
  auto spaced = [&](ag::Shape shape) {
    const std::size_t n = ag::numel(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (0.015 + 0.01 * static_cast<double>(i)) * (i % 2 ? -1.0 : 1.0);
    std::shuffle(v.begin(), v.end(), rng.engine());
    return Tensor<double>::from(std::move(shape), std::move(v), true);
  };
  double worst = 0.0;
  std::string worst_op;
  auto check = [&](const std::string& name, const gradcheck::Fn& f, std::vector<Tensor<double>> in) {
    for (double e : relative_errors(f, in))
      if (e > worst) {
        worst = e;
        worst_op = name;
      }
  };

  auto x = random_tensor(rng, {2, 3, 9, 7});
  auto w = random_tensor(rng, {4, 3, 5, 3});
  auto b = random_tensor(rng, {4});
  check("conv2d", [&] { return ag::conv2d(x, w, b, {3, 2, 2, 1}); }, {x, w, b});
  auto xw = random_tensor(rng, {2, 2, 6, 26});
  auto w3 = random_tensor(rng, {3, 2, 3, 3});
  check("conv2d 3x3", [&] { return ag::conv2d(xw, w3, Tensor<double>(), {1, 1, 1, 1}); }, {xw, w3});
  auto xt = random_tensor(rng, {2, 3, 4, 3});
  auto wt = random_tensor(rng, {3, 2, 2, 2});
  auto bt = random_tensor(rng, {2});
  check("conv_transpose2d", [&] { return ag::conv_transpose2d(xt, wt, bt, {2, 2, 0, 0}); }, {xt, wt, bt});
  auto xb = random_tensor(rng, {4, 3, 5, 6}, true, -2.0, 5.0);
  auto gm = random_tensor(rng, {3}, true, 0.5, 1.5);
  auto bb = random_tensor(rng, {3});
  check("batch_norm train", [&] {
    ag::BatchNormState<double> s{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
    return ag::batch_norm(xb, gm, bb, s, true);
  }, {xb, gm, bb});
  ag::BatchNormState<double> frozen{{0.3, -0.2, 1.0}, {2.0, 0.5, 1.5}};
  check("batch_norm eval", [&] { return ag::batch_norm(xb, gm, bb, frozen, false); }, {xb, gm, bb});
  auto a = spaced({2, 3, 4, 5});
  check("leaky_relu", [&] { return ag::leaky_relu(a, 0.1); }, {a});
  check("relu", [&] { return ag::relu(a); }, {a});
  auto sg = random_tensor(rng, {2, 3, 4, 5}, true, -6.0, 6.0);
  check("sigmoid", [&] { return ag::sigmoid(sg); }, {sg});
  auto c = spaced({1, 2, 5, 9});
  for (double& v : c.value()) v = v * 5.0 + 0.5;
  check("clamp01", [&] { return ag::clamp01(c); }, {c});
  auto p = spaced({2, 2, 8, 6});
  check("max_pool2d", [&] { return ag::max_pool2d(p, 2, 2, 2, 2); }, {p});
  check("spp", [&] { return ag::spp(p); }, {p});
  auto r = random_tensor(rng, {2, 2, 5, 3});
  check("bilinear_resize", [&] { return ag::bilinear_resize(r, 11, 7); }, {r});
  auto c1 = random_tensor(rng, {2, 2, 3, 4});
  auto c2 = random_tensor(rng, {2, 1, 3, 4});
  check("concat_channels", [&] { return ag::concat_channels<double>({c1, c2}); }, {c1, c2});
  auto c3 = random_tensor(rng, {2, 2, 3, 4});
  check("add", [&] { return ag::add(c1, c3); }, {c1, c3});
  check("mean_width", [&] { return ag::mean_width(c1); }, {c1});
  auto sr = random_tensor(rng, {2, 2, 3, 1});
  check("scale_rows", [&] { return ag::scale_rows(c1, sr); }, {c1, sr});
  auto gs = random_tensor(rng, {6, 1, 3, 2});
  check("group_sum", [&] { return ag::group_sum(gs, 3); }, {gs});
  auto pr = random_tensor(rng, {2, 1, 3, 4}, true, 0.05, 0.95);
  const auto tg = random_tensor(rng, {2, 1, 3, 4}, false, 0.0, 1.0);
  check("bce_loss", [&] { return ag::bce_loss(pr, tg); }, {pr});

  // Miniature network, 20 weights across all stages.
  mifn::MifnConfig cfg;
  cfg.height = 32;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.cbl_channels1 = 3;
  cfg.cbl_channels2 = 4;
  mifn::Mifn<double> net(cfg, 9);
  const auto feats = random_tensor(rng, {2, 10, 32, 16}, false, 0.0, 1.0);
  const auto slices = random_tensor(rng, {10, 1, 32, 5}, false);
  std::vector<double> mk(10 * 32 * 16, 0.0);
  for (std::size_t n = 0; n < 10; ++n)
    for (std::size_t row = 0; row < 32; ++row) mk[(n * 32 + row) * 16 + (row / 3 + n % 5) % 16] = 1.0;
  const auto masks = Tensor<double>::from({10, 1, 32, 16}, mk);
  const auto target = random_tensor(rng, {2, 1, 32, 16}, false, 0.0, 1.0);
  auto loss = [&] {
    const auto s = net.encode_sgs(slices, masks, 5, true);
    return ag::bce_loss(net.unet(ag::concat_channels<double>({feats, s}), true), target);
  };
  const auto& params = net.parameters().params;
  double e2e = 0.0;
  std::size_t probed = 0;
  for (std::size_t i = 0; i < params.size() && probed < 20; i += std::max<std::size_t>(1, params.size() / 20), ++probed)
    e2e = std::max(e2e, relative_errors(loss, {*params[i].second}, {(probed * 7) % params[i].second->numel()}, 1e-6)[0]);

  report(5, worst < 1e-4 && e2e < 1e-3, "autograd",
         fmt("worst layer error %.2g (%s), mini-MIFN error %.2g over %zu weights", worst, worst_op.c_str(), e2e, probed));
}

void labels_and_loss() {
  Rng rng(6006);
  const auto axes = spectrum::default_axes();
  bool values_ok = true;
  for (int i = 0; i < 50; ++i) {
    const auto m = synth::random_layer_model(rng);
    const auto label = train::soft_label(synth::truth_curve(m), axes);
    for (float x : label.values()) values_ok = values_ok && (x == 0.0f || x == 0.8f || x == 1.0f);
  }
  const Grid2D half(64, 32, 0.5f);
  const double loss = train::bce(half, half);
  const auto t = ag::Tensor<double>::full({2, 1, 8, 8}, 0.5);
  const double tensor_loss = ag::bce_loss(t, t).item();
  const double err = std::max(std::abs(loss - std::log(2.0)), std::abs(tensor_loss - std::log(2.0)));
  report(6, values_ok && err <= 1e-9, "soft label and loss",
         fmt("mask values %s, |BCE(0.5, 0.5) - log 2| = %.1e", values_ok ? "in {0, 0.8, 1}" : "OUTSIDE {0, 0.8, 1}", err));
}

// One hot cell per row at the column nearest the curve.
Grid2D ideal_map(const VelocityCurve& c, const SpectrumAxes& axes) {
  Grid2D map(axes.time.n_t, axes.velocity.n_v);
  const auto dense = interp_curve(c, axes.time);
  for (std::size_t r = 0; r < map.rows(); ++r) map(r, axes.velocity.nearest(dense[r])) = 1.0f;
  return map;
}

void postprocessing() {
  const auto axes = spectrum::default_axes();
  Rng rng(7007);
  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<CurvePoint> pts;
    double v = rng.uniform(1500.0, 2200.0);
    const int n = static_cast<int>(rng.integer(2, 7));
    for (int k = 0; k < n; ++k) {
      pts.push_back({axes.time.t_end() * k / (n - 1), v});
      v += rng.uniform(0.0, 450.0);
    }
    const VelocityCurve truth(pts);
    const double e = pick::vmae(pick::segmentation_to_curve(ideal_map(truth, axes), axes), truth, axes.time);
    worst = std::max(worst, e);
    ok += e <= axes.velocity.dv / 2.0;
  }
  report(7, ok == 100, "post-processing oracle", fmt("%d/100 curves within v_d/2, worst VMAE %.2f m/s", ok, worst));
}

void early_stopping() {
  train::EarlyStopper s(10);
  std::vector<double> losses{0.9, 0.5};
  for (int i = 0; i < 10; ++i) losses.push_back(0.5);
  std::size_t fired = 0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (s.update(losses[i])) {
      fired = i;
      break;
    }
  report(9, fired == 11 && s.stale() == 10, "early stopping",
         fmt("stopped at validation %zu after %zu non-improvements", fired + 1, s.stale()));
}

// ---------------------------------------------------------------------------
// Criteria 8, 10 and 11 share one synthetic survey.

void make_lines(const fs::path& root, const std::string& prefix, const std::string& split, int lines, int n_cdp,
                double snr, std::uint64_t seed) {
  for (int l = 0; l < lines; ++l) {
    const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(l);
    Rng rng(s);
    synth::LineParams p;
    p.base = synth::random_layer_model(rng);
    p.geometry = synth::default_geometry();
    p.n_cdp = n_cdp;
    p.snr_db = snr;
    p.seed = s;
    p.drift = 0.004;
    p.time_wobble = 0.01;
    const std::string name = prefix + std::to_string(l);
    synth::write_line(root / name, synth::make_line(p), name, split);
    pipeline::compute_line_spectra(root / name, spectrum::default_axes());
  }
}

mifn::MifnConfig desk_config(mifn::Variant v) {
  mifn::MifnConfig cfg;
  cfg.height = kHeight;
  cfg.width = kWidth;
  cfg.base_channels = kBase;
  cfg.variant = v;
  return cfg;
}

train::TrainConfig desk_training() {
  train::TrainConfig tc;
  tc.max_iterations = iterations;
  tc.seed = kShuffleSeed;
  return tc;
}

struct Survey {
  fs::path train, val, test, low, clean;
};

void end_to_end(const Survey& d) {
  const auto t0 = std::chrono::steady_clock::now();
  double vm_full = 0.0, vm_full_low = 0.0, vm_nosgs_low = 0.0;
  std::size_t n_train = 0, n_test = 0;
  for (auto v : {mifn::Variant::kFull, mifn::Variant::kNoSgs}) {
    const auto cfg = desk_config(v);
    pipeline::FeatureOptions opts;
    opts.with_sgs = cfg.uses_sgs();
    const auto tr = pipeline::load_split(d.train, "train", cfg, opts);
    const auto va = pipeline::load_split(d.val, "val", cfg, opts);
    mifn::Mifn<float> net(cfg, kNetSeed);
    train::fit(net, tr.samples, va.samples, desk_training());
    const auto low = pipeline::load_split(d.low, "test", cfg, opts, true);
    n_train = tr.samples.size();
    if (v == mifn::Variant::kFull) {
      const auto te = pipeline::load_split(d.test, "test", cfg, opts, true);
      n_test = te.samples.size();
      vm_full = pipeline::mean_vmae(net, te);
      vm_full_low = pipeline::mean_vmae(net, low);
      net.save(d.train.parent_path() / "full.mifnw");
      pipeline::write_model_sidecar(d.train.parent_path() / "full.mifnw", cfg, opts);
    } else {
      vm_nosgs_low = pipeline::mean_vmae(net, low);
    }
  }
  const double secs = seconds_since(t0);
  report(8, vm_full <= 60.0 && vm_full_low < vm_nosgs_low, "end-to-end training",
         fmt("%zu train / %zu test spectra: VMAE %.2f m/s at 10 dB; at 0 dB full %.2f vs no-SGS %.2f m/s; %.0f s",
             n_train, n_test, vm_full, vm_full_low, vm_nosgs_low, secs));
}

void qc_sanity(const Survey& d) {
  const fs::path weights = d.train.parent_path() / "full.mifnw";
  const auto [cfg, opts] = pipeline::read_model_sidecar(weights);
  mifn::Mifn<float> net(cfg, 0);
  net.load(weights);
  double worst = 1e9;
  double ceiling = 1e9;  // truth snapped to the velocity grid, i.e. a perfect segmentation
  int lines = 0;
  for (const auto& entry : fs::directory_iterator(d.clean)) {
    const auto line = pipeline::load_line(entry.path());
    std::vector<VelocityCurve> picked, truth, snapped;
    for (std::size_t i = 0; i < line.gathers.size(); ++i) {
      picked.push_back(pipeline::pick_curve(net, pipeline::build_features(line, i, opts)));
      truth.push_back(*line.labels[i]);
      snapped.push_back(pick::segmentation_to_curve(ideal_map(truth.back(), line.axes), line.axes));
    }
    const double full = pick::qc(line.gathers, truth).total_power();
    worst = std::min(worst, pick::qc(line.gathers, picked).total_power() / full);
    ceiling = std::min(ceiling, pick::qc(line.gathers, snapped).total_power() / full);
    ++lines;
  }
  report(10, lines > 0 && worst >= 0.9, "QC sanity",
         fmt("picked/truth stack power >= %.3f on %d noise-free lines (grid-snapped truth: %.3f)", worst, lines,
             ceiling));
}

void determinism(const Survey& d) {
  mifn::MifnConfig cfg;
  cfg.height = 32;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.base_channels = 4;
  pipeline::FeatureOptions opts;
  const auto tr = pipeline::load_split(d.val, "val", cfg, opts);
  const auto te = pipeline::load_split(d.clean, "test", cfg, opts, true);
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.max_iterations = 30;
  tc.validate_every = 5;
  tc.seed = 11;
  std::vector<train::HistoryRow> hist[2];
  std::vector<VelocityCurve> curves[2];
  for (int run = 0; run < 2; ++run) {
    mifn::Mifn<float> net(cfg, 3);
    hist[run] = train::fit(net, tr.samples, tr.samples, tc).history;
    for (std::size_t i = 0; i < 5 && i < te.features.size(); ++i)
      curves[run].push_back(pipeline::pick_curve(net, te.features[i]));
  }
  bool same_hist = hist[0].size() == hist[1].size();
  for (std::size_t i = 0; same_hist && i < hist[0].size(); ++i)
    same_hist = hist[0][i].train_bce == hist[1][i].train_bce && hist[0][i].val_bce == hist[1][i].val_bce;
  const bool same_curves = curves[0] == curves[1];
  report(11, same_hist && same_curves, "determinism",
         fmt("loss history (%zu rows) %s, %zu picked curves %s", hist[0].size(), same_hist ? "identical" : "DIFFERS",
             curves[0].size(), same_curves ? "identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    const std::string flag = argv[i];
    if (flag == "--iterations") iterations = std::stoul(argv[i + 1]);
    if (flag == "--expect-fail") {
      std::stringstream ids(argv[i + 1]);
      for (std::string id; std::getline(ids, id, ',');) expected_failures.insert(std::stoi(id));
    }
  }
  spdlog::set_level(spdlog::level::off);
  const auto t0 = std::chrono::steady_clock::now();
  std::printf("[INFO]  1 field results: the field VMAEs and figures need proprietary surveys and are not "
              "reproduced; synthetic and property checks stand in for them.\n");
  std::fflush(stdout);

  semblance_argmax();
  semblance_bounds();
  enhancement();
  autograd();
  labels_and_loss();
  postprocessing();

  TmpDir tmp;
  const Survey d{tmp / "train", tmp / "val", tmp / "test", tmp / "low", tmp / "clean"};
  make_lines(d.train, "tr", "train", 10, 20, 10.0, 1);
  make_lines(d.val, "va", "val", 2, 10, 10.0, 2);
  make_lines(d.test, "te", "test", 5, 10, 10.0, 3);
  make_lines(d.low, "lo", "test", 5, 10, 0.0, 3);
  make_lines(d.clean, "cl", "test", 3, 10, synth::kNoNoise, 3);
  end_to_end(d);
  early_stopping();
  qc_sanity(d);
  determinism(d);

  std::printf("%d criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
