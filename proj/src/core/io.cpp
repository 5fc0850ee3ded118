// SPDX-License-Identifier: Apache-2.0

#include "velopick/core/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "velopick/core/errors.hpp"

namespace velopick::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "vpk reader/writer assumes a little-endian host");

constexpr std::array<char, 4> kVpkMagic = {'V', 'P', 'K', '1'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw FormatError("vpk: truncated header in " + path.string());
  return value;
}

std::ifstream open_in(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("missing file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  return out;
}

}  // namespace

std::size_t NdArray::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void write_vpk(const std::filesystem::path& path, const NdArray& array) {
  if (array.dims.empty() || array.dims.size() > 255)
    throw FormatError("vpk: rank must be in [1, 255]");
  if (array.element_count() != array.data.size())
    throw FormatError("vpk: dims do not match data length");
  auto out = open_out(path);
  out.write(kVpkMagic.data(), kVpkMagic.size());
  put<std::uint8_t>(out, static_cast<std::uint8_t>(array.dims.size()));
  for (auto d : array.dims) put<std::uint32_t>(out, d);
  out.write(reinterpret_cast<const char*>(array.data.data()),
            static_cast<std::streamsize>(array.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("vpk: write failed: " + path.string());
}

NdArray read_vpk(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kVpkMagic)
    throw FormatError("vpk: bad magic in " + path.string());
  NdArray array;
  const auto ndim = get<std::uint8_t>(in, path);
  if (ndim == 0) throw FormatError("vpk: zero rank in " + path.string());
  for (unsigned i = 0; i < ndim; ++i) array.dims.push_back(get<std::uint32_t>(in, path));
  const std::size_t n = array.element_count();
  array.data.resize(n);
  if (!in.read(reinterpret_cast<char*>(array.data.data()),
               static_cast<std::streamsize>(n * sizeof(float))))
    throw FormatError("vpk: truncated data in " + path.string());
  if (in.peek() != std::ifstream::traits_type::eof())
    throw FormatError("vpk: trailing bytes in " + path.string());
  return array;
}

void write_grid(const std::filesystem::path& path, const Grid2D& grid) {
  write_vpk(path, {{static_cast<std::uint32_t>(grid.rows()), static_cast<std::uint32_t>(grid.cols())},
                   grid.values()});
}

Grid2D read_grid(const std::filesystem::path& path) {
  NdArray a = read_vpk(path);
  if (a.dims.size() != 2) throw FormatError("expected a 2-D array in " + path.string());
  return Grid2D(a.dims[0], a.dims[1], std::move(a.data));
}

void write_grids(const std::filesystem::path& path, const std::vector<Grid2D>& grids) {
  if (grids.empty()) throw FormatError("write_grids: nothing to write");
  const auto rows = grids.front().rows();
  const auto cols = grids.front().cols();
  NdArray a;
  a.dims = {static_cast<std::uint32_t>(grids.size()), static_cast<std::uint32_t>(rows),
            static_cast<std::uint32_t>(cols)};
  a.data.reserve(grids.size() * rows * cols);
  for (const auto& g : grids) {
    if (g.rows() != rows || g.cols() != cols) throw ShapeError("write_grids: ragged grids");
    a.data.insert(a.data.end(), g.values().begin(), g.values().end());
  }
  write_vpk(path, a);
}

std::vector<Grid2D> read_grids(const std::filesystem::path& path) {
  NdArray a = read_vpk(path);
  if (a.dims.size() != 3) throw FormatError("expected a 3-D array in " + path.string());
  const std::size_t plane = std::size_t{a.dims[1]} * a.dims[2];
  std::vector<Grid2D> out;
  for (std::uint32_t i = 0; i < a.dims[0]; ++i)
    out.emplace_back(a.dims[1], a.dims[2],
                     std::vector<float>(a.data.begin() + i * plane, a.data.begin() + (i + 1) * plane));
  return out;
}

void write_curve_csv(const std::filesystem::path& path, const VelocityCurve& curve) {
  auto out = open_out(path);
  out << "t_ms,v_mps\n";
  out.precision(10);
  for (const auto& p : curve.points()) out << p.t * 1000.0 << ',' << p.v << '\n';
}

VelocityCurve read_curve_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("curve csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_ms,v_mps") throw FormatError("curve csv: bad header in " + path.string());
  std::vector<CurvePoint> pts;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    double t_ms = 0.0;
    double v = 0.0;
    char comma = 0;
    if (!(row >> t_ms >> comma >> v) || comma != ',')
      throw FormatError("curve csv: malformed row '" + line + "' in " + path.string());
    pts.push_back({t_ms / 1000.0, v});
  }
  return VelocityCurve(std::move(pts));
}

void write_pgm(const std::filesystem::path& path, const Grid2D& grid, float lo, float hi) {
  if (lo == hi) {
    lo = grid.min_value();
    hi = grid.max_value();
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  auto out = open_out(path);
  out << "P5\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  std::vector<unsigned char> bytes(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const float u = std::clamp((grid.values()[i] - lo) / span, 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(u * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace velopick::io
