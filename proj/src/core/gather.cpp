// SPDX-License-Identifier: Apache-2.0

#include "velopick/core/gather.hpp"

#include <cmath>
#include <string>

#include "velopick/core/errors.hpp"

namespace velopick {

AcquisitionGeometry::AcquisitionGeometry(std::vector<double> offs, TimeAxis axis)
    : offsets(std::move(offs)), time(axis) {
  if (offsets.size() < 2) throw DomainError("geometry: need at least two offsets");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (!(offsets[i] >= 0.0) || !std::isfinite(offsets[i]))
      throw DomainError("geometry: offsets must be finite and non-negative");
    if (i > 0 && !(offsets[i] > offsets[i - 1]))
      throw DomainError("geometry: offsets must be strictly increasing");
  }
}

CmpGather::CmpGather(AcquisitionGeometry geom, Grid2D data)
    : geometry(std::move(geom)), traces(std::move(data)) {
  if (traces.cols() != geometry.traces() || traces.rows() != geometry.time.n_t)
    throw ShapeError("gather: data " + std::to_string(traces.rows()) + "x" +
                     std::to_string(traces.cols()) + " does not match geometry " +
                     std::to_string(geometry.time.n_t) + "x" +
                     std::to_string(geometry.traces()));
  if (!traces.all_finite()) throw DomainError("gather: non-finite amplitude");
}

}  // namespace velopick
