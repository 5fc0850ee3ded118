// SPDX-License-Identifier: Apache-2.0
//
// A line directory holds manifest.json plus one gather (and optionally a
// spectrum and a label curve) per cdp:
//
//   {
//     "format": "velopick-line/1",
//     "line": "L000", "split": "train",
//     "geometry": {"t_start": 0, "dt": 0.002, "n_t": 1024, "offsets": [...]},
//     "spectrum_axes": {"t_start":..,"dt":..,"n_t":..,"v_min":..,"dv":..,"n_v":..},
//     "cdps": [{"cdp": 0, "gather": "gather_0000.vpk",
//               "spectrum": "spectrum_0000.vpk", "label": "truth_0000.csv"}]
//   }

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "velopick/core/gather.hpp"
#include "velopick/core/types.hpp"

namespace velopick {

struct SpectrumAxes {
  TimeAxis time;
  VelocityAxis velocity;

  bool operator==(const SpectrumAxes&) const = default;
};

struct CdpEntry {
  int cdp = 0;
  std::string gather;    // relative to the line directory
  std::string spectrum;  // optional
  std::string label;     // optional
};

struct LineManifest {
  std::string line;
  std::string split;  // "train", "val", "test" or empty
  AcquisitionGeometry geometry;
  std::optional<SpectrumAxes> spectrum_axes;
  std::vector<CdpEntry> cdps;
};

/// Writes manifest.json into `dir` (created if needed). Arrays are written
/// separately by the caller.
void write_manifest(const std::filesystem::path& dir, const LineManifest& manifest);

/// Reads and validates manifest.json: every referenced file must exist and
/// every array must match the declared dimensions.
LineManifest read_manifest(const std::filesystem::path& dir);

/// True when `dir` contains a manifest.json.
bool is_line_dir(const std::filesystem::path& dir);

/// Line directories directly below `root` (sorted by name), or `root` itself
/// when it is a line directory.
std::vector<std::filesystem::path> find_lines(const std::filesystem::path& root);

CmpGather load_gather(const std::filesystem::path& dir, const LineManifest& m, std::size_t index);
std::optional<VelocityCurve> load_label(const std::filesystem::path& dir, const LineManifest& m,
                                        std::size_t index);

/// Sidecar metadata for standalone arrays: `<file>.json`.
void write_sidecar(const std::filesystem::path& array_path, const std::string& json_text);
std::string read_sidecar(const std::filesystem::path& array_path);

std::string format_index(int cdp);

}  // namespace velopick
