// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "tmpdir.hpp"
#include "velopick/core/errors.hpp"
#include "velopick/train.hpp"

using namespace velopick;

namespace {

SpectrumAxes small_axes() {
  return SpectrumAxes{TimeAxis(0.0, 0.1, 16), VelocityAxis(2000.0, 100.0, 8)};
}

mifn::MifnConfig tiny_config() {
  mifn::MifnConfig cfg;
  cfg.height = 16;
  cfg.width = 8;
  cfg.depth = 1;
  cfg.base_channels = 4;
  cfg.variant = mifn::Variant::kNoSgs;
  return cfg;
}

// The label is the first spectrum channel, so the task is learnable.
std::vector<mifn::Sample> toy_set(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  const auto axes = small_axes();
  std::vector<mifn::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v0 = rng.uniform(2000.0, 2400.0), v1 = rng.uniform(2300.0, 2700.0);
    mifn::Sample s;
    s.label = train::soft_label(VelocityCurve({{0.0, v0}, {1.5, v1}}), axes);
    for (int c = 0; c < 10; ++c) {
      Grid2D g = s.label;
      for (float& x : g.values()) x = x * 0.8f + static_cast<float>(rng.uniform(0.0, 0.2));
      s.spectrum.push_back(std::move(g));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("soft label") {
  const auto axes = small_axes();
  const VelocityCurve c({{0.0, 2300.0}, {1.5, 2300.0}});
  const Grid2D g = train::soft_label(c, axes);
  REQUIRE(g.rows() == 16);
  REQUIRE(g.cols() == 8);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t col = 0; col < 8; ++col) {
      const float expect = col == 3 ? 1.0f : (col == 2 || col == 4) ? 0.8f : 0.0f;
      CHECK(g(r, col) == expect);
    }

  SUBCASE("a diagonal ridge keeps its ones") {
    const SpectrumAxes sq{TimeAxis(0.0, 0.1, 8), VelocityAxis(2000.0, 100.0, 8)};
    const Grid2D d = train::soft_label(VelocityCurve({{0.0, 2000.0}, {0.7, 2700.0}}), sq);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t col = 0; col < 8; ++col) {
        const long dist = std::abs(static_cast<long>(r) - static_cast<long>(col));
        const float expect = dist == 0 ? 1.0f : dist <= 2 ? 0.8f : 0.0f;  // diagonals reach two columns
        CHECK(d(r, col) == expect);
      }
  }
  SUBCASE("a one-knot curve does not span the axis") {
    CHECK_THROWS(train::soft_label(VelocityCurve({{0.4, 2500.0}}), axes));
  }
  SUBCASE("values are only 0, 0.8 and 1") {
    const Grid2D w = train::soft_label(VelocityCurve({{0.0, 1500.0}, {0.9, 2550.0}, {1.5, 3500.0}}), axes);
    for (float x : w.values()) CHECK((x == 0.0f || x == 0.8f || x == 1.0f));
    CHECK(w(0, 0) == 1.0f);
    CHECK(w(15, 7) == 1.0f);
  }
}

TEST_CASE("bce") {
  const Grid2D half(3, 3, 0.5f);
  CHECK(train::bce(half, half) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  const Grid2D p(2, 2, std::vector<float>{0.2f, 0.7f, 0.9f, 0.4f});
  const Grid2D t(2, 2, std::vector<float>{0.0f, 0.8f, 1.0f, 0.3f});
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double pi = p.values()[i], ti = t.values()[i];
    expect -= ti * std::log(pi) + (1.0 - ti) * std::log(1.0 - pi);
  }
  CHECK(train::bce(p, t) == doctest::Approx(expect / 4.0).epsilon(1e-6));
  const Grid2D hard(1, 2, std::vector<float>{0.0f, 1.0f});
  CHECK(std::isfinite(train::bce(hard, Grid2D(1, 2, std::vector<float>{1.0f, 0.0f}))));
  CHECK_THROWS_AS(train::bce(half, Grid2D(2, 3)), ShapeError);
}

TEST_CASE("early stopping counts strict improvements only") {
  train::EarlyStopper s(10);
  CHECK_FALSE(s.update(1.0));
  CHECK(s.improved());
  CHECK_FALSE(s.update(0.5));
  // Equal losses are not improvements.
  for (int i = 1; i < 10; ++i) {
    CHECK_FALSE(s.update(i % 2 ? 0.5 : 0.7));
    CHECK_FALSE(s.improved());
    CHECK(s.stale() == static_cast<std::size_t>(i));
  }
  CHECK(s.update(0.5));
  CHECK(s.best() == 0.5);

  train::EarlyStopper r(3);
  r.update(1.0);
  r.update(2.0);
  r.update(2.0);
  CHECK_FALSE(r.update(0.9));
  CHECK(r.stale() == 0);
}

TEST_CASE("config validation") {
  train::TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  mifn::Mifn<float> net(tiny_config(), 1);
  CHECK_THROWS_AS(train::fit(net, {}, toy_set(1, 2), cfg), ConfigError);
  CHECK_THROWS_AS(train::fit(net, toy_set(1, 2), {}, cfg), ConfigError);
}

TEST_CASE("fitting a learnable toy task") {
  const auto train_set = toy_set(1, 24), val_set = toy_set(2, 8);
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.lr = 0.01;
  cfg.max_iterations = 60;
  cfg.validate_every = 10;
  cfg.seed = 3;

  mifn::Mifn<float> net(tiny_config(), 4);
  const double before = train::evaluate(net, val_set, 8);
  std::vector<train::HistoryRow> seen;
  const auto result = train::fit(net, train_set, val_set, cfg, [&](const train::HistoryRow& r) { seen.push_back(r); });
  CHECK(result.history.size() == seen.size());
  CHECK(result.history.front().iter == 10);
  const double after = train::evaluate(net, val_set, 8);
  CHECK(after < 0.5 * before);
  // The network is left at the best validation point.
  CHECK(after == doctest::Approx(result.best_val).epsilon(1e-5));
  double best = 1e9;
  for (const auto& r : result.history) best = std::min(best, r.val_bce);
  CHECK(result.best_val == best);

  mifn::Mifn<float> twin(tiny_config(), 4);
  const auto again = train::fit(twin, train_set, val_set, cfg);
  REQUIRE(again.history.size() == result.history.size());
  for (std::size_t i = 0; i < again.history.size(); ++i) CHECK(again.history[i].val_bce == result.history[i].val_bce);

  TmpDir tmp;
  train::write_history(tmp / "h.csv", result.history);
  std::ifstream f(tmp / "h.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "iter,train_bce,val_bce");
}

TEST_CASE("ten samples can be overfit") {
  // Wide rows keep the entropy of the 0.8 halo cells well below 0.05.
  auto cfg_net = tiny_config();
  cfg_net.width = 64;
  const SpectrumAxes axes{TimeAxis(0.0, 0.1, 16), VelocityAxis(2000.0, 12.5, 64)};
  Rng rng(8);
  std::vector<mifn::Sample> data;
  for (int i = 0; i < 10; ++i) {
    mifn::Sample s;
    const double v0 = rng.uniform(2050.0, 2600.0);
    s.label = train::soft_label(VelocityCurve({{0.0, v0}, {1.5, v0 + rng.uniform(0.0, 150.0)}}), axes);
    for (int c = 0; c < 10; ++c) s.spectrum.push_back(s.label);
    data.push_back(std::move(s));
  }
  train::TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.max_iterations = 2000;
  cfg.validate_every = 25;
  cfg.patience = 1000;
  mifn::Mifn<float> net(cfg_net, 2);
  std::size_t reached = 0;
  train::fit(net, data, data, cfg, [&](const train::HistoryRow& r) {
    if (!reached && r.train_bce < 0.05) reached = r.iter;
  });
  CHECK(reached > 0);
  MESSAGE("training BCE below 0.05 by iteration " << reached);
}

TEST_CASE("a trailing partial interval still validates") {
  const auto data = toy_set(5, 6);
  train::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iterations = 7;
  cfg.validate_every = 5;
  mifn::Mifn<float> net(tiny_config(), 1);
  const auto r = train::fit(net, data, data, cfg);
  REQUIRE(r.history.size() == 2);
  CHECK(r.history[1].iter == 7);
  CHECK(r.iterations == 7);
}

TEST_CASE("patience ends training") {
  const auto data = toy_set(6, 4);
  train::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 0.5;  // far too large; the loss wanders
  cfg.max_iterations = 1000;
  cfg.validate_every = 1;
  cfg.patience = 3;
  mifn::Mifn<float> net(tiny_config(), 1);
  const auto r = train::fit(net, data, data, cfg);
  REQUIRE(r.stopped_early);
  CHECK(r.iterations < 1000);
  const auto& h = r.history;
  REQUIRE(h.size() >= 4);
  double best = 1e9;
  for (std::size_t i = 0; i + 3 < h.size(); ++i) best = std::min(best, h[i].val_bce);
  for (std::size_t i = h.size() - 3; i < h.size(); ++i) CHECK(h[i].val_bce >= best);
  CHECK(h[h.size() - 4].val_bce == best);
}

}  // TEST_SUITE
