// SPDX-License-Identifier: Apache-2.0

#include "velopick/core/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "velopick/core/errors.hpp"
#include "velopick/core/io.hpp"

namespace velopick {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kFormat = "velopick-line/1";

json axes_to_json(const SpectrumAxes& a) {
  return {{"t_start", a.time.t_start}, {"dt", a.time.dt},         {"n_t", a.time.n_t},
          {"v_min", a.velocity.v_min}, {"dv", a.velocity.dv}, {"n_v", a.velocity.n_v}};
}

SpectrumAxes axes_from_json(const json& j) {
  return {TimeAxis(j.at("t_start").get<double>(), j.at("dt").get<double>(),
                   j.at("n_t").get<std::size_t>()),
          VelocityAxis(j.at("v_min").get<double>(), j.at("dv").get<double>(),
                       j.at("n_v").get<std::size_t>())};
}

void check_dims(const fs::path& file, std::size_t rows, std::size_t cols) {
  // Header-only read: magic, rank and dims; the data length is checked by
  // comparing the file size.
  if (!fs::exists(file)) throw MissingFileError("manifest references missing file: " + file.string());
  std::ifstream in(file, std::ios::binary);
  char magic[4] = {};
  std::uint8_t ndim = 0;
  std::uint32_t dims[2] = {};
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ndim), 1);
  if (!in || std::string(magic, 4) != "VPK1" || ndim != 2)
    throw FormatError("bad array header: " + file.string());
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw FormatError("truncated array header: " + file.string());
  if (dims[0] != rows || dims[1] != cols)
    throw FormatError("array " + file.string() + " is " + std::to_string(dims[0]) + "x" +
                      std::to_string(dims[1]) + ", manifest declares " + std::to_string(rows) +
                      "x" + std::to_string(cols));
  const auto expected = 4 + 1 + 8 + std::uintmax_t{rows} * cols * 4;
  if (fs::file_size(file) != expected) throw FormatError("array size mismatch: " + file.string());
}

}  // namespace

std::string format_index(int cdp) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", cdp);
  return buf;
}

void write_manifest(const fs::path& dir, const LineManifest& m) {
  fs::create_directories(dir);
  json j;
  j["format"] = kFormat;
  j["line"] = m.line;
  j["split"] = m.split;
  j["geometry"] = {{"t_start", m.geometry.time.t_start},
                   {"dt", m.geometry.time.dt},
                   {"n_t", m.geometry.time.n_t},
                   {"offsets", m.geometry.offsets}};
  if (m.spectrum_axes) j["spectrum_axes"] = axes_to_json(*m.spectrum_axes);
  j["cdps"] = json::array();
  for (const auto& c : m.cdps) {
    json e = {{"cdp", c.cdp}, {"gather", c.gather}};
    if (!c.spectrum.empty()) e["spectrum"] = c.spectrum;
    if (!c.label.empty()) e["label"] = c.label;
    j["cdps"].push_back(e);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

LineManifest read_manifest(const fs::path& dir) {
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw MissingFileError("missing manifest: " + file.string());
  json j;
  try {
    std::ifstream in(file);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest " + file.string() + ": " + e.what());
  }
  LineManifest m;
  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw FormatError("manifest " + file.string() + ": unknown format");
    m.line = j.at("line").get<std::string>();
    m.split = j.value("split", "");
    const auto& g = j.at("geometry");
    m.geometry = AcquisitionGeometry(
        g.at("offsets").get<std::vector<double>>(),
        TimeAxis(g.at("t_start").get<double>(), g.at("dt").get<double>(), g.at("n_t").get<std::size_t>()));
    if (j.contains("spectrum_axes")) m.spectrum_axes = axes_from_json(j["spectrum_axes"]);
    for (const auto& e : j.at("cdps")) {
      CdpEntry c;
      c.cdp = e.at("cdp").get<int>();
      c.gather = e.at("gather").get<std::string>();
      c.spectrum = e.value("spectrum", "");
      c.label = e.value("label", "");
      m.cdps.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + file.string() + ": " + e.what());
  }

  for (const auto& c : m.cdps) {
    check_dims(dir / c.gather, m.geometry.time.n_t, m.geometry.traces());
    if (!c.spectrum.empty()) {
      if (!m.spectrum_axes) throw FormatError("manifest lists spectra but no spectrum_axes");
      check_dims(dir / c.spectrum, m.spectrum_axes->time.n_t, m.spectrum_axes->velocity.n_v);
    }
    if (!c.label.empty() && !fs::exists(dir / c.label))
      throw MissingFileError("manifest references missing file: " + (dir / c.label).string());
  }
  return m;
}

bool is_line_dir(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

std::vector<fs::path> find_lines(const fs::path& root) {
  if (is_line_dir(root)) return {root};
  if (!fs::is_directory(root)) throw MissingFileError("not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && is_line_dir(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

CmpGather load_gather(const fs::path& dir, const LineManifest& m, std::size_t index) {
  return CmpGather(m.geometry, io::read_grid(dir / m.cdps.at(index).gather));
}

std::optional<VelocityCurve> load_label(const fs::path& dir, const LineManifest& m,
                                        std::size_t index) {
  const auto& c = m.cdps.at(index);
  if (c.label.empty()) return std::nullopt;
  return io::read_curve_csv(dir / c.label);
}

void write_sidecar(const fs::path& array_path, const std::string& json_text) {
  fs::path p = array_path;
  p += ".json";
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << json_text << '\n';
}

std::string read_sidecar(const fs::path& array_path) {
  fs::path p = array_path;
  p += ".json";
  if (!fs::exists(p)) throw MissingFileError("missing metadata sidecar: " + p.string());
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace velopick
