// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "velopick/core/errors.hpp"
#include "velopick/spectrum.hpp"
#include "velopick/synth.hpp"

using namespace velopick;

namespace {

synth::LayerModel single(double t0, double v, double amplitude = 1.0) {
  synth::LayerModel m;
  m.layers = {{t0, v, amplitude}};
  return m;
}

double power_of(const Grid2D& g) {
  double s = 0.0;
  for (float x : g.values()) s += double{x} * x;
  return s / static_cast<double>(g.size());
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("ricker peak and zero crossings") {
  CHECK(synth::ricker(0.0, 25.0) == doctest::Approx(1.0));
  const double zero = 1.0 / (std::numbers::pi * 25.0 * std::sqrt(2.0));
  CHECK(std::abs(synth::ricker(zero, 25.0)) < 1e-12);
  CHECK(std::abs(synth::ricker(-zero, 25.0)) < 1e-12);
  CHECK(synth::ricker(0.01, 25.0) == doctest::Approx(synth::ricker(-0.01, 25.0)));
}

TEST_CASE("rms velocity") {
  CHECK(synth::rms_velocity(single(2.0, 2000.0), 0.7) == doctest::Approx(2000.0));

  synth::LayerModel two;
  two.layers = {{1.0, 2000.0}, {2.0, 3000.0}};
  CHECK(synth::rms_velocity(two, 2.0) == doctest::Approx(2549.5098).epsilon(1e-6));
  CHECK(synth::rms_velocity(two, 1.0) == doctest::Approx(2000.0));
  // Halfway into the second layer: (2000^2 * 1 + 3000^2 * 0.5) / 1.5
  CHECK(synth::rms_velocity(two, 1.5) == doctest::Approx(std::sqrt((4e6 + 4.5e6) / 1.5)));

  synth::LayerModel same;
  same.layers = {{0.5, 2200.0}, {1.0, 2200.0}, {1.7, 2200.0}};
  for (double t : {0.1, 0.5, 0.8, 1.7}) CHECK(synth::rms_velocity(same, t) == doctest::Approx(2200.0));

  CHECK_THROWS_AS(synth::rms_velocity(two, 0.0), DomainError);
  CHECK_THROWS_AS(synth::rms_velocity(two, -1.0), DomainError);
}

TEST_CASE("layer model validation") {
  synth::LayerModel bad;
  bad.layers = {{1.0, 2000.0}, {0.8, 2500.0}};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.layers = {{1.0, -5.0}};
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("noise-free event follows the stacking hyperbola") {
  const auto geom = synth::default_geometry();
  Rng rng(0);
  const auto g = synth::make_gather(single(1.0, 2500.0), geom, synth::kNoNoise, rng);
  for (std::size_t i = 0; i < geom.traces(); ++i) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < geom.time.n_t; ++r)
      if (g.gather.traces(r, i) > g.gather.traces(best, i)) best = r;
    const double expected = spectrum::nmo_time(1.0, geom.offsets[i], 2500.0);
    CHECK(std::abs(geom.time.time(best) - expected) <= geom.time.dt);
  }
}

TEST_CASE("measured SNR matches the request") {
  const auto geom = synth::default_geometry();
  synth::LayerModel m;
  m.layers = {{0.4, 1800.0}, {0.9, 2300.0, -0.7}, {1.5, 2900.0, 0.5}};
  for (double snr : {0.0, 10.0, -5.0}) {
    Rng clean_rng(1), noisy_rng(11);
    const auto clean = synth::make_gather(m, geom, synth::kNoNoise, clean_rng);
    const auto noisy = synth::make_gather(m, geom, snr, noisy_rng);
    Grid2D noise = noisy.gather.traces;
    for (std::size_t i = 0; i < noise.size(); ++i) noise.values()[i] -= clean.gather.traces.values()[i];
    const double measured = 10.0 * std::log10(power_of(clean.gather.traces) / power_of(noise));
    CHECK(std::abs(measured - snr) < 0.5);
  }
}

TEST_CASE("zero-amplitude reflectors") {
  const auto geom = synth::default_geometry();
  Rng rng(2);
  const auto quiet = synth::make_gather(single(1.0, 2000.0, 0.0), geom, synth::kNoNoise, rng);
  CHECK(quiet.gather.traces.max_value() == 0.0f);
  CHECK(quiet.truth.size() >= 2);
  CHECK_THROWS_AS(synth::make_gather(single(1.0, 2000.0, 0.0), geom, 10.0, rng), DomainError);
}

TEST_CASE("same seed gives bit-identical gathers") {
  synth::LineParams p;
  Rng rng(5);
  p.base = synth::random_layer_model(rng);
  p.geometry = synth::default_geometry();
  p.n_cdp = 6;
  p.snr_db = 3.0;
  p.seed = 77;
  const auto a = synth::make_line(p);
  const auto b = synth::make_line(p);
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c].gather.traces == b[c].gather.traces);
  p.seed = 78;
  CHECK(!(synth::make_line(p)[0].gather.traces == a[0].gather.traces));
}

TEST_CASE("line drift") {
  synth::LineParams p;
  Rng rng(8);
  p.base = synth::random_layer_model(rng);
  p.geometry = synth::default_geometry();
  p.n_cdp = 21;

  const auto flat = synth::make_line(p);
  for (const auto& g : flat) CHECK(g.truth == flat[0].truth);

  p.drift = 0.01;
  const auto drifting = synth::make_line(p);
  for (std::size_t c = 1; c < drifting.size(); ++c) {
    const auto& prev = drifting[c - 1].truth.points();
    const auto& cur = drifting[c].truth.points();
    REQUIRE(prev.size() == cur.size());
    for (std::size_t k = 0; k < cur.size(); ++k) CHECK(cur[k].v > prev[k].v);
  }

  p.n_cdp = 3;
  CHECK_THROWS_AS(synth::make_line(p), DomainError);
}

}  // TEST_SUITE
