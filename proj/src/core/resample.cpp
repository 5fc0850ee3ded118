// SPDX-License-Identifier: Apache-2.0

#include "velopick/core/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace velopick {

ResampleTap resample_tap(std::size_t out_index, std::size_t in_size, std::size_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  const double src = std::max(0.0, (static_cast<double>(out_index) + 0.5) * scale - 0.5);
  ResampleTap tap;
  tap.i0 = std::min(static_cast<std::size_t>(src), in_size - 1);
  tap.i1 = std::min(tap.i0 + 1, in_size - 1);
  tap.w1 = tap.i1 == tap.i0 ? 0.0 : src - static_cast<double>(tap.i0);
  return tap;
}

Grid2D resize_bilinear(const Grid2D& grid, std::size_t rows, std::size_t cols) {
  if (rows == grid.rows() && cols == grid.cols()) return grid;
  std::vector<ResampleTap> rt(rows), ct(cols);
  for (std::size_t r = 0; r < rows; ++r) rt[r] = resample_tap(r, grid.rows(), rows);
  for (std::size_t c = 0; c < cols; ++c) ct[c] = resample_tap(c, grid.cols(), cols);
  Grid2D out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& a = rt[r];
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& b = ct[c];
      const double top = grid(a.i0, b.i0) * (1.0 - b.w1) + grid(a.i0, b.i1) * b.w1;
      const double bot = grid(a.i1, b.i0) * (1.0 - b.w1) + grid(a.i1, b.i1) * b.w1;
      out(r, c) = static_cast<float>(top * (1.0 - a.w1) + bot * a.w1);
    }
  }
  return out;
}

}  // namespace velopick
