// SPDX-License-Identifier: Apache-2.0

#include "velopick/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "velopick/core/errors.hpp"
#include "velopick/simd/kernels.hpp"

namespace velopick::enhance {

void EnhanceParams::validate() const {
  if (ws < 1) throw DomainError("enhance: ws must be >= 1");
  if (st < 1) throw DomainError("enhance: st must be >= 1");
  if (!(eec >= 1.0)) throw DomainError("enhance: eec must be >= 1");
  if (ln < 1) throw DomainError("enhance: ln must be >= 1");
  if (!(lb >= 0.0 && lb < ub && ub <= 1.0)) throw DomainError("enhance: need 0 <= lb < ub <= 1");
}

const std::array<EnhanceParams, 9>& parameter_rows() {
  static const std::array<EnhanceParams, 9> rows{{
      {5, 1, 1.0, 5, kLowerBound, kUpperBound},
      {5, 2, 1.5, 8, kLowerBound, kUpperBound},
      {5, 3, 2.0, 12, kLowerBound, kUpperBound},
      {10, 1, 1.0, 5, kLowerBound, kUpperBound},
      {10, 2, 1.5, 8, kLowerBound, kUpperBound},
      {10, 3, 2.0, 12, kLowerBound, kUpperBound},
      {15, 1, 1.0, 5, kLowerBound, kUpperBound},
      {15, 2, 1.5, 8, kLowerBound, kUpperBound},
      {15, 3, 2.0, 12, kLowerBound, kUpperBound},
  }};
  return rows;
}

void smooth_columns(Grid2D& grid, int ws, int st) {
  if (ws <= 1) return;
  const std::size_t rows = grid.rows();
  const std::size_t cols = grid.cols();
  // Window rows [r - before, r + after]; for even ws the extra sample lies
  // above (earlier time).
  const auto before = static_cast<std::ptrdiff_t>(ws / 2);
  const auto after = static_cast<std::ptrdiff_t>(ws - 1 - ws / 2);
  std::vector<float> acc(cols);
  for (int pass = 0; pass < st; ++pass) {
    Grid2D out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(r) - before);
      const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(rows) - 1,
                                               static_cast<std::ptrdiff_t>(r) + after);
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (auto k = lo; k <= hi; ++k) simd::axpy(1.0f, grid.row(static_cast<std::size_t>(k)).data(), acc.data(), cols);
      const float inv = 1.0f / static_cast<float>(hi - lo + 1);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] = acc[c] * inv;
    }
    grid = std::move(out);
  }
}

void power_inflate(Grid2D& grid, double eec) {
  if (eec == 1.0) return;
  for (float& x : grid.values()) x = static_cast<float>(std::pow(std::max(0.0f, x), eec));
}

void normalize_layers(Grid2D& grid, int ln) {
  const std::size_t rows = grid.rows();
  const std::size_t layers = std::min<std::size_t>(static_cast<std::size_t>(ln), rows);
  const std::size_t base = rows / layers;
  const std::size_t extra = rows % layers;
  std::size_t start = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t height = base + (l < extra ? 1 : 0);
    float peak = 0.0f;
    for (std::size_t r = start; r < start + height; ++r)
      for (float x : grid.row(r)) peak = std::max(peak, x);
    if (peak > 1e-12f) {
      for (std::size_t r = start; r < start + height; ++r)
        for (float& x : grid.row(r)) x /= peak;
    }
    start += height;
  }
}

void limit_amplitude(Grid2D& grid, double lb, double ub) {
  const auto lo = static_cast<float>(lb);
  const auto hi = static_cast<float>(ub);
  for (float& x : grid.values()) {
    if (x < lo)
      x = 0.0f;
    else if (x > hi)
      x = hi;
  }
}

Grid2D enhance(const Grid2D& spectrum, const EnhanceParams& p) {
  p.validate();
  Grid2D g = spectrum;
  smooth_columns(g, p.ws, p.st);
  power_inflate(g, p.eec);
  normalize_layers(g, p.ln);
  limit_amplitude(g, p.lb, p.ub);
  return g;
}

std::vector<Grid2D> multiscale_stack(const Grid2D& spectrum) {
  std::vector<Grid2D> out;
  out.reserve(kStackChannels);
  out.push_back(spectrum);
  for (const auto& p : parameter_rows()) out.push_back(enhance(spectrum, p));
  return out;
}

}  // namespace velopick::enhance
