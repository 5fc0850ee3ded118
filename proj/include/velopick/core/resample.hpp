// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "velopick/core/types.hpp"

namespace velopick {

/// Source coordinate and blend weight for one output index of a bilinear
/// resize with half-pixel centres (align_corners = false).
struct ResampleTap {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double w1 = 0.0;  // weight of i1; i0 gets 1 - w1
};

ResampleTap resample_tap(std::size_t out_index, std::size_t in_size, std::size_t out_size);

/// Bilinear resize, half-pixel centres, edge clamped. Same size is a copy.
Grid2D resize_bilinear(const Grid2D& grid, std::size_t rows, std::size_t cols);

}  // namespace velopick
