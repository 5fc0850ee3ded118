// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gradcheck.hpp"
#include "tmpdir.hpp"
#include "velopick/ag/layers.hpp"
#include "velopick/ag/ops.hpp"
#include "velopick/core/errors.hpp"

using namespace velopick;
using ag::Tensor;
using gradcheck::random_tensor;
using gradcheck::relative_errors;
namespace fs = std::filesystem;

namespace {

constexpr double kTol = 1e-4;

void check_errors(const std::vector<double>& errs) {
  for (std::size_t i = 0; i < errs.size(); ++i) {
    INFO("input " << i);
    CHECK(errs[i] < kTol);
  }
}

// Values at least 0.01 apart and away from zero, so that no +-1e-3 probe
// crosses a kink or reorders a pooling window.
Tensor<double> distinct_tensor(Rng& rng, ag::Shape shape) {
  const std::size_t n = ag::numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.015 + 0.01 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng.engine());
  for (std::size_t i = 0; i < n; ++i)
    if (i % 2) v[i] = -v[i];
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("conv2d forward examples") {
  const auto x = Tensor<float>::from({1, 2, 3, 3}, std::vector<float>(18, 0.0f));
  for (std::size_t i = 0; i < 18; ++i) x.node()->value[i] = static_cast<float>(i) - 4.0f;
  std::vector<float> eye{1, 0, 0, 1};
  const auto w1 = Tensor<float>::from({2, 2, 1, 1}, eye);
  const auto y1 = ag::conv2d(x, w1, Tensor<float>(), {});
  for (std::size_t i = 0; i < 18; ++i) CHECK(y1.value()[i] == x.value()[i]);

  const auto ones = Tensor<float>::full({1, 1, 5, 5}, 1.0f);
  const auto box = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  const auto y2 = ag::conv2d(ones, box, Tensor<float>(), {1, 1, 1, 1});
  REQUIRE(y2.shape() == ag::Shape{1, 1, 5, 5});
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) CHECK(y2.value()[r * 5 + c] == 9.0f);
  CHECK(y2.value()[0] == 4.0f);
  CHECK(y2.value()[2] == 6.0f);

  const auto strided = ag::conv2d(Tensor<float>::zeros({2, 1, 10, 7}), Tensor<float>::zeros({4, 1, 5, 3}),
                                  Tensor<float>(), {3, 2, 2, 1});
  CHECK(strided.shape() == ag::Shape{2, 4, 4, 4});

  CHECK_THROWS_AS(ag::conv2d(ones, Tensor<float>::zeros({1, 2, 3, 3}), Tensor<float>(), {}), ShapeError);
  CHECK_THROWS_AS(ag::conv2d(Tensor<float>::zeros({1, 1, 2, 2}), box, Tensor<float>(), {}), ShapeError);
}

TEST_CASE("conv2d gradients") {
  Rng rng(1);
  SUBCASE("strided with padding and bias") {
    auto x = random_tensor(rng, {2, 3, 9, 7});
    auto w = random_tensor(rng, {4, 3, 5, 3});
    auto b = random_tensor(rng, {4});
    check_errors(relative_errors([&] { return ag::conv2d(x, w, b, {3, 2, 2, 1}); }, {x, w, b}));
  }
  SUBCASE("pointwise") {
    auto x = random_tensor(rng, {2, 3, 4, 5});
    auto w = random_tensor(rng, {2, 3, 1, 1});
    auto b = random_tensor(rng, {2});
    check_errors(relative_errors([&] { return ag::conv2d(x, w, b, {}); }, {x, w, b}));
  }
  SUBCASE("3x3 same padding on a wide map (direct path)") {
    auto x = random_tensor(rng, {2, 2, 6, 26});
    auto w = random_tensor(rng, {3, 2, 3, 3});
    check_errors(relative_errors([&] { return ag::conv2d(x, w, Tensor<double>(), {1, 1, 1, 1}); }, {x, w}));
  }
  SUBCASE("3x3 same padding on a narrow map") {
    auto x = random_tensor(rng, {2, 2, 6, 5});
    auto w = random_tensor(rng, {3, 2, 3, 3});
    check_errors(relative_errors([&] { return ag::conv2d(x, w, Tensor<double>(), {1, 1, 1, 1}); }, {x, w}));
  }
}

TEST_CASE("direct and im2col 3x3 paths agree") {
  Rng rng(2);
  auto x = random_tensor(rng, {2, 3, 5, 30}, false);
  auto w = random_tensor(rng, {4, 3, 3, 3}, false);
  const auto wide = ag::conv2d(x, w, Tensor<double>(), {1, 1, 1, 1});
  // Same data split into narrow column strips goes through im2col.
  for (std::size_t c0 : {0, 10, 20}) {
    std::vector<double> strip(2 * 3 * 5 * 12, 0.0);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t r = 0; r < 5; ++r)
          for (std::size_t c = 0; c < 12; ++c) {
            const auto src = static_cast<std::ptrdiff_t>(c0 + c) - 1;
            if (src >= 0 && src < 30)
              strip[((n * 3 + ch) * 5 + r) * 12 + c] = x.value()[((n * 3 + ch) * 5 + r) * 30 + static_cast<std::size_t>(src)];
          }
    const auto narrow = ag::conv2d(Tensor<double>::from({2, 3, 5, 12}, strip), w, Tensor<double>(), {1, 1, 0, 0});
    REQUIRE(narrow.shape() == ag::Shape{2, 4, 3, 10});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t r = 0; r < 3; ++r)
          for (std::size_t c = 0; c < 10; ++c)
            CHECK(narrow.value()[((n * 4 + o) * 3 + r) * 10 + c] ==
                  doctest::Approx(wide.value()[((n * 4 + o) * 5 + r + 1) * 30 + c0 + c]));
  }
}

TEST_CASE("conv_transpose2d") {
  Rng rng(3);
  auto x = random_tensor(rng, {2, 3, 4, 3});
  auto w = random_tensor(rng, {3, 2, 2, 2});
  auto b = random_tensor(rng, {2});
  const auto y = ag::conv_transpose2d(x, w, b, {2, 2, 0, 0});
  CHECK(y.shape() == ag::Shape{2, 2, 8, 6});
  check_errors(relative_errors([&] { return ag::conv_transpose2d(x, w, b, {2, 2, 0, 0}); }, {x, w, b}));
  auto w3 = random_tensor(rng, {3, 2, 3, 3});
  check_errors(relative_errors([&] { return ag::conv_transpose2d(x, w3, b, {2, 1, 1, 1}); }, {x, w3, b}));

  // Adjoint identity: <conv(u), v> == <u, conv_t(v)>.
  auto u = random_tensor(rng, {1, 2, 8, 6}, false);
  auto v = random_tensor(rng, {1, 3, 4, 3}, false);
  const auto cu = ag::conv2d(u, w.detach(), Tensor<double>(), {2, 2, 0, 0});
  const auto tv = ag::conv_transpose2d(v, w.detach(), Tensor<double>(), {2, 2, 0, 0});
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cu.numel(); ++i) lhs += cu.value()[i] * v.value()[i];
  for (std::size_t i = 0; i < tv.numel(); ++i) rhs += u.value()[i] * tv.value()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("activations") {
  const auto x = Tensor<double>::from({1, 1, 1, 2}, {2.0, -2.0}, true);
  const auto y = ag::leaky_relu(x, 0.1);
  CHECK(y.value()[0] == 2.0);
  CHECK(y.value()[1] == doctest::Approx(-0.2));
  const auto g = Tensor<double>::from({1, 1, 1, 1}, {-1.0}, true);
  ag::weighted_sum(ag::leaky_relu(g, 0.1), {1.0}).backward();
  CHECK(g.grad()[0] == doctest::Approx(0.1));

  Rng rng(4);
  auto a = distinct_tensor(rng, {2, 3, 4, 5});
  check_errors(relative_errors([&] { return ag::leaky_relu(a, 0.1); }, {a}));
  check_errors(relative_errors([&] { return ag::relu(a); }, {a}));
  auto s = random_tensor(rng, {2, 3, 4, 5}, true, -6.0, 6.0);
  check_errors(relative_errors([&] { return ag::sigmoid(s); }, {s}));
  const auto big = ag::sigmoid(Tensor<double>::from({1, 1, 1, 2}, {-800.0, 800.0}));
  CHECK(big.value()[0] >= 0.0);
  CHECK(big.value()[1] == 1.0);

  auto c = distinct_tensor(rng, {1, 2, 5, 9});
  for (double& v : c.value()) v = v * 5.0 + 0.5;  // spans both sides of [0, 1]
  check_errors(relative_errors([&] { return ag::clamp01(c); }, {c}));
}

TEST_CASE("batch norm") {
  Rng rng(5);
  auto x = random_tensor(rng, {4, 3, 5, 6}, true, -2.0, 5.0);
  auto gamma = Tensor<double>::full({3}, 1.0, true);
  auto beta = Tensor<double>::zeros({3}, true);
  ag::BatchNormState<double> st{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
  const auto y = ag::batch_norm(x, gamma, beta, st, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 30; ++i) {
        const double z = y.value()[(b * 3 + c) * 30 + i];
        m += z;
        v += z * z;
        ++n;
      }
    m /= static_cast<double>(n);
    CHECK(std::abs(m) < 1e-9);
    CHECK(v / static_cast<double>(n) - m * m == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(st.running_mean[c] != 0.0);
  }

  const auto flat = Tensor<double>::full({2, 1, 3, 3}, 4.2);
  auto b2 = Tensor<double>::full({1}, 0.7);
  ag::BatchNormState<double> st2{{0.0}, {1.0}};
  const auto yf = ag::batch_norm(flat, Tensor<double>::full({1}, 1.0), b2, st2, true);
  for (double v : yf.value()) CHECK(v == doctest::Approx(0.7));

  auto g2 = random_tensor(rng, {3}, true, 0.5, 1.5);
  auto be2 = random_tensor(rng, {3});
  check_errors(relative_errors(
      [&] {
        ag::BatchNormState<double> s{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
        return ag::batch_norm(x, g2, be2, s, true);
      },
      {x, g2, be2}));
  ag::BatchNormState<double> frozen{{0.3, -0.2, 1.0}, {2.0, 0.5, 1.5}};
  check_errors(relative_errors([&] { return ag::batch_norm(x, g2, be2, frozen, false); }, {x, g2, be2}));

  ag::BatchNormState<double> wrong{{0.0}, {1.0}};
  CHECK_THROWS_AS(ag::batch_norm(x, Tensor<double>::full({1}, 1.0), Tensor<double>::zeros({1}), wrong, true),
                  ShapeError);
}

TEST_CASE("pooling") {
  const auto k = Tensor<double>::full({1, 2, 6, 6}, 3.0);
  const auto pooled = ag::max_pool2d(k, 2, 2, 2, 2);
  CHECK(pooled.shape() == ag::Shape{1, 2, 3, 3});
  for (double v : pooled.value()) CHECK(v == 3.0);
  const auto pyramid = ag::spp(k);
  CHECK(pyramid.shape() == ag::Shape{1, 6, 6, 6});
  for (double v : pyramid.value()) CHECK(v == 3.0);

  Rng rng(6);
  auto x = distinct_tensor(rng, {2, 2, 8, 6});
  check_errors(relative_errors([&] { return ag::max_pool2d(x, 2, 2, 2, 2); }, {x}));
  check_errors(relative_errors([&] { return ag::max_pool2d(x, 3, 3, 2, 1, 1, 1); }, {x}));
  check_errors(relative_errors([&] { return ag::spp(x); }, {x}));

  // Ties go to the first element of the window.
  auto tie = Tensor<double>::full({1, 1, 2, 2}, 1.0, true);
  ag::weighted_sum(ag::max_pool2d(tie, 2, 2, 2, 2), {1.0}).backward();
  CHECK(tie.grad()[0] == 1.0);
  CHECK(tie.grad()[1] == 0.0);
  CHECK(tie.grad()[3] == 0.0);
  CHECK_THROWS_AS(ag::max_pool2d(Tensor<double>::zeros({1, 1, 1, 1}), 2, 2, 2, 2), ShapeError);
}

TEST_CASE("bilinear resize") {
  const auto x = Tensor<double>::from({1, 1, 2, 2}, {0.0, 1.0, 0.0, 1.0});
  const auto y = ag::bilinear_resize(x, 2, 4);
  const double row[] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(y.value()[r * 4 + c] == doctest::Approx(row[c]));

  Rng rng(7);
  auto a = random_tensor(rng, {2, 2, 5, 3});
  const auto same = ag::bilinear_resize(a, 5, 3);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(same.value()[i] == a.value()[i]);
  check_errors(relative_errors([&] { return ag::bilinear_resize(a, 11, 7); }, {a}));
  check_errors(relative_errors([&] { return ag::bilinear_resize(a, 3, 1); }, {a}));
  check_errors(relative_errors([&] { return ag::bilinear_resize(a, 16, 2); }, {a}));
}

TEST_CASE("structural ops") {
  Rng rng(8);
  auto a = random_tensor(rng, {2, 2, 3, 4});
  auto b = random_tensor(rng, {2, 1, 3, 4});
  auto c = random_tensor(rng, {2, 2, 3, 4});
  check_errors(relative_errors([&] { return ag::concat_channels<double>({a, b, c}); }, {a, b, c}));
  check_errors(relative_errors([&] { return ag::add(a, c); }, {a, c}));
  check_errors(relative_errors([&] { return ag::mean_width(a); }, {a}));
  auto s = random_tensor(rng, {2, 2, 3, 1});
  check_errors(relative_errors([&] { return ag::scale_rows(c, s); }, {c, s}));
  auto g = random_tensor(rng, {6, 1, 3, 2});
  check_errors(relative_errors([&] { return ag::group_sum(g, 3); }, {g}));
  CHECK(ag::group_sum(g, 3).shape() == ag::Shape{2, 1, 3, 2});
  CHECK_THROWS_AS(ag::add(a, b), ShapeError);
  CHECK_THROWS_AS(ag::group_sum(g, 4), ShapeError);
}

TEST_CASE("bce loss") {
  const auto half = Tensor<double>::full({2, 1, 3, 3}, 0.5);
  CHECK(ag::bce_loss(half, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto t = Tensor<double>::from({1, 1, 1, 4}, {0.0, 1.0, 1.0, 0.0});
  CHECK(ag::bce_loss(t, t).item() < 1e-6);

  // Hand evaluation on a 2x2 grid.
  const auto p = Tensor<double>::from({1, 1, 2, 2}, {0.2, 0.7, 0.9, 0.4});
  const auto q = Tensor<double>::from({1, 1, 2, 2}, {0.0, 0.8, 1.0, 0.3});
  const double expect = -(std::log(0.8) + 0.8 * std::log(0.7) + 0.2 * std::log(0.3) + std::log(0.9) +
                          0.3 * std::log(0.4) + 0.7 * std::log(0.6)) /
                        4.0;
  CHECK(ag::bce_loss(p, q).item() == doctest::Approx(expect).epsilon(1e-12));

  Rng rng(9);
  auto pred = random_tensor(rng, {2, 1, 3, 4}, true, 0.05, 0.95);
  const auto target = random_tensor(rng, {2, 1, 3, 4}, false, 0.0, 1.0);
  check_errors(relative_errors([&] { return ag::bce_loss(pred, target); }, {pred}));
  CHECK_THROWS_AS(ag::bce_loss(pred, Tensor<double>::zeros({2, 1, 3, 3})), ShapeError);
}

TEST_CASE("gradients accumulate additively and forward passes are deterministic") {
  Rng rng(10);
  auto x = random_tensor(rng, {1, 2, 6, 6});
  auto w = random_tensor(rng, {3, 2, 3, 3});
  auto loss = [&] { return ag::weighted_sum(ag::sigmoid(ag::conv2d(x, w, Tensor<double>(), {1, 1, 1, 1})), std::vector<double>(108, 1.0)); };
  w.zero_grad();
  loss().backward();
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  loss().backward();
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(2.0 * once[i]));
  CHECK(loss().item() == loss().item());
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Tensor<double>::full({1, 1, 2, 2}, 1.0, true);
  ag::NoGradGuard guard;
  const auto y = ag::sigmoid(x);
  CHECK(!y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    ag::AdamState st;
    for (int i = 0; i < 50; ++i) ag::adam_step<double>(p, g, st, {});
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  }
  SUBCASE("first step has magnitude lr whatever the gradient scale") {
    for (double scale : {1e-4, 1.0, 1e4}) {
      std::vector<double> p{0.0};
      const std::vector<double> g{scale};
      ag::AdamState st;
      ag::adam_step<double>(p, g, st, {0.01});
      CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-3));
    }
  }
  SUBCASE("quadratic descent is monotone") {
    std::vector<double> w{1.0};
    ag::AdamState st;
    double prev = std::abs(w[0]);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> g{2.0 * w[0]};
      ag::adam_step<double>(w, g, st, {0.01});
      CHECK(std::abs(w[0]) < prev);
      prev = std::abs(w[0]);
    }
  }
  SUBCASE("optimiser object updates every parameter") {
    Rng rng(11);
    auto a = random_tensor(rng, {4});
    auto b = random_tensor(rng, {2, 2});
    const std::vector<double> a0(a.value().begin(), a.value().end());
    ag::Adam<double> opt({&a, &b}, {0.05});
    opt.zero_grad();
    ag::weighted_sum(a, {1, 1, 1, 1}).backward();
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.value()[i] == doctest::Approx(a0[i] - 0.05));
  }
}

TEST_CASE("weights container") {
  TmpDir tmp;
  Rng rng(12);
  ag::Conv2d<float> conv({2, 3, 3, 3, 1, 1, 1, 1, true}, rng);
  ag::BatchNorm2d<float> bn(3);
  bn.state.running_mean = {0.1f, 0.2f, 0.3f};
  ag::ParamList<float> list;
  conv.collect("conv", list);
  bn.collect("bn", list);
  ag::save_weights(tmp / "w.mifnw", list);

  ag::Conv2d<float> conv2({2, 3, 3, 3, 1, 1, 1, 1, true}, rng);
  ag::BatchNorm2d<float> bn2(3);
  ag::ParamList<float> list2;
  conv2.collect("conv", list2);
  bn2.collect("bn", list2);
  ag::assign_weights(ag::read_weights(tmp / "w.mifnw"), list2);
  CHECK(std::equal(conv.weight.value().begin(), conv.weight.value().end(), conv2.weight.value().begin()));
  CHECK(bn2.state.running_mean == bn.state.running_mean);

  const auto size = fs::file_size(tmp / "w.mifnw");
  fs::copy_file(tmp / "w.mifnw", tmp / "cut.mifnw");
  fs::resize_file(tmp / "cut.mifnw", size - 5);
  CHECK_THROWS_AS(ag::read_weights(tmp / "cut.mifnw"), FormatError);
  CHECK_THROWS_AS(ag::read_weights(tmp / "none.mifnw"), MissingFileError);

  ag::Conv2d<float> other({2, 4, 3, 3, 1, 1, 1, 1, true}, rng);
  ag::ParamList<float> list3;
  other.collect("conv", list3);
  bn2.collect("bn", list3);
  CHECK_THROWS_AS(ag::assign_weights(ag::read_weights(tmp / "w.mifnw"), list3), FormatError);
}

}  // TEST_SUITE
