// SPDX-License-Identifier: Apache-2.0
// Central-difference gradient checks in double precision.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "velopick/ag/ops.hpp"
#include "velopick/ag/tensor.hpp"
#include "velopick/core/rng.hpp"

namespace gradcheck {

using velopick::ag::Tensor;
using Fn = std::function<Tensor<double>()>;

constexpr double kStep = 1e-3;

inline Tensor<double> random_tensor(velopick::Rng& rng, velopick::ag::Shape shape, bool grad = true,
                                    double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(velopick::ag::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v), grad);
}

/// Scalar loss = sum(out * w) for fixed random w.
struct Probe {
  std::vector<double> w;
  Tensor<double> operator()(const Tensor<double>& out) {
    if (w.size() != out.numel()) {
      velopick::Rng rng(4242);
      w.resize(out.numel());
      for (double& x : w) x = rng.uniform(-1.0, 1.0);
    }
    return velopick::ag::weighted_sum(out, w);
  }
};

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) for every input.
/// `indices`, when non-empty, restricts the numeric side to those entries of
/// each input (the analytic side is compared on the same entries).
inline std::vector<double> relative_errors(const Fn& f, std::vector<Tensor<double>> inputs,
                                           const std::vector<std::size_t>& indices = {}, double step = kStep) {
  Probe probe;
  for (auto& t : inputs) t.zero_grad();
  probe(f()).backward();
  std::vector<double> errors;
  for (auto& t : inputs) {
    std::vector<std::size_t> idx = indices;
    if (idx.empty())
      for (std::size_t i = 0; i < t.numel(); ++i) idx.push_back(i);
    double diff = 0.0, na = 0.0, nn = 0.0;
    velopick::ag::NoGradGuard no_grad;
    for (auto i : idx) {
      const double keep = t.value()[i];
      t.value()[i] = keep + step;
      const double up = probe(f()).item();
      t.value()[i] = keep - step;
      const double down = probe(f()).item();
      t.value()[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = t.grad()[i];
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(std::max(na, nn)), 1e-12);
    errors.push_back(std::sqrt(diff) / denom);
  }
  return errors;
}

}  // namespace gradcheck
