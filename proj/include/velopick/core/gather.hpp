// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "velopick/core/types.hpp"

namespace velopick {

/// Offsets (m) of the traces in a CMP plus the recording time axis.
struct AcquisitionGeometry {
  std::vector<double> offsets;
  TimeAxis time;

  AcquisitionGeometry() = default;
  AcquisitionGeometry(std::vector<double> offs, TimeAxis axis);

  std::size_t traces() const { return offsets.size(); }
  bool operator==(const AcquisitionGeometry&) const = default;
};

/// Prestack CMP gather: n_t x M amplitudes, one column per offset.
struct CmpGather {
  AcquisitionGeometry geometry;
  Grid2D traces;

  CmpGather() = default;
  CmpGather(AcquisitionGeometry geom, Grid2D data);
};

}  // namespace velopick
