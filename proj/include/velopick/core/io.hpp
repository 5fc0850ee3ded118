// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats.
//
//   *.vpk   "VPK1" | u8 ndim | u32 dims[ndim] | f32 data   (little-endian)
//   *.csv   velocity curves, header "t_ms,v_mps"
//   *.pgm   8-bit binary greymap previews

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "velopick/core/types.hpp"

namespace velopick::io {

struct NdArray {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

void write_vpk(const std::filesystem::path& path, const NdArray& array);
NdArray read_vpk(const std::filesystem::path& path);

void write_grid(const std::filesystem::path& path, const Grid2D& grid);
/// Reads a 2-D array; FormatError if the file holds any other rank.
Grid2D read_grid(const std::filesystem::path& path);

/// Stacks equally shaped grids into a rank-3 array (count x rows x cols).
void write_grids(const std::filesystem::path& path, const std::vector<Grid2D>& grids);
std::vector<Grid2D> read_grids(const std::filesystem::path& path);

void write_curve_csv(const std::filesystem::path& path, const VelocityCurve& curve);
VelocityCurve read_curve_csv(const std::filesystem::path& path);

/// Linear map of [lo, hi] onto 0..255; lo == hi picks the grid's own range.
void write_pgm(const std::filesystem::path& path, const Grid2D& grid, float lo = 0.0f,
               float hi = 0.0f);

}  // namespace velopick::io
