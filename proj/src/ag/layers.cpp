// SPDX-License-Identifier: Apache-2.0

#include "velopick/ag/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "velopick/core/errors.hpp"

namespace velopick::ag {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "MIFNW1";
constexpr std::size_t kMagicLen = 6;

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

}  // namespace

void LayerConfig::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("layer: channel counts must be >= 1");
  if (kh == 0 || kw == 0 || sh == 0 || sw == 0) throw ConfigError("layer: kernel and stride must be >= 1");
}

template <typename T>
Conv2d<T>::Conv2d(const LayerConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const double fan_in = static_cast<double>(cfg.in_channels * cfg.kh * cfg.kw);
  weight = uniform_tensor<T>({cfg.out_channels, cfg.in_channels, cfg.kh, cfg.kw}, std::sqrt(6.0 / fan_in), rng);
  if (cfg.bias) bias = Tensor<T>::zeros({cfg.out_channels}, true);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.params.emplace_back(prefix + ".weight", &weight);
  if (bias.defined()) out.params.emplace_back(prefix + ".bias", &bias);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(const LayerConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const double fan_in = static_cast<double>(cfg.in_channels * cfg.kh * cfg.kw);
  weight = uniform_tensor<T>({cfg.in_channels, cfg.out_channels, cfg.kh, cfg.kw}, std::sqrt(6.0 / fan_in), rng);
  if (cfg.bias) bias = Tensor<T>::zeros({cfg.out_channels}, true);
}

template <typename T>
void ConvTranspose2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.params.emplace_back(prefix + ".weight", &weight);
  if (bias.defined()) out.params.emplace_back(prefix + ".bias", &bias);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      state{std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1))} {}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.params.emplace_back(prefix + ".gamma", &gamma);
  out.params.emplace_back(prefix + ".beta", &beta);
  out.buffers.emplace_back(prefix + ".running_mean", &state.running_mean);
  out.buffers.emplace_back(prefix + ".running_var", &state.running_var);
}

// ---------------------------------------------------------------------------

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.size() != param.size()) throw ShapeError("adam_step: gradient size does not match parameter");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size()) throw ShapeError("adam_step: optimiser state does not match parameter");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] = static_cast<T>(param[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>*> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    adam_step<T>(p.value(), p.grad(), states_[i], cfg_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------

template <typename T>
WeightMap snapshot_weights(const ParamList<T>& list) {
  WeightMap out;
  for (const auto& [name, t] : list.params) {
    WeightRecord rec;
    for (auto d : t->shape()) rec.dims.push_back(static_cast<std::uint32_t>(d));
    rec.data.assign(t->value().begin(), t->value().end());
    out[name] = std::move(rec);
  }
  for (const auto& [name, b] : list.buffers) {
    WeightRecord rec{{static_cast<std::uint32_t>(b->size())}, std::vector<float>(b->begin(), b->end())};
    out[name] = std::move(rec);
  }
  return out;
}

template <typename T>
void save_weights(const std::filesystem::path& path, const ParamList<T>& list) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw MissingFileError("cannot write weights to " + path.string());
  f.write(kMagic, kMagicLen);
  auto write_record = [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                          const std::vector<float>& data) {
    const auto len = static_cast<std::uint16_t>(name.size());
    const auto nd = static_cast<std::uint8_t>(dims.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    f.write(reinterpret_cast<const char*>(&nd), 1);
    f.write(reinterpret_cast<const char*>(dims.data()), static_cast<std::streamsize>(dims.size() * 4));
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
  };
  // Parameters first, then buffers, each in model order.
  const WeightMap snap = snapshot_weights(list);
  for (const auto& [name, t] : list.params) write_record(name, snap.at(name).dims, snap.at(name).data);
  for (const auto& [name, b] : list.buffers) write_record(name, snap.at(name).dims, snap.at(name).data);
  if (!f) throw FormatError("failed writing weights to " + path.string());
}

WeightMap read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFileError("weights file not found: " + path.string());
  char magic[kMagicLen];
  if (!f.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw FormatError(path.string() + ": not a MIFNW1 weights file");
  WeightMap out;
  while (true) {
    std::uint16_t len = 0;
    if (!f.read(reinterpret_cast<char*>(&len), sizeof len)) {
      if (f.gcount() == 0) break;
      throw FormatError(path.string() + ": truncated record header");
    }
    std::string name(len, '\0');
    std::uint8_t nd = 0;
    if (!f.read(name.data(), len) || !f.read(reinterpret_cast<char*>(&nd), 1))
      throw FormatError(path.string() + ": truncated record header");
    WeightRecord rec;
    rec.dims.resize(nd);
    if (!f.read(reinterpret_cast<char*>(rec.dims.data()), static_cast<std::streamsize>(nd * 4)))
      throw FormatError(path.string() + ": truncated dims in record " + name);
    std::size_t count = 1;
    for (auto d : rec.dims) count *= d;
    rec.data.resize(count);
    if (!f.read(reinterpret_cast<char*>(rec.data.data()), static_cast<std::streamsize>(count * 4)))
      throw FormatError(path.string() + ": truncated data in record " + name);
    if (!out.emplace(name, std::move(rec)).second)
      throw FormatError(path.string() + ": duplicate record " + name);
  }
  return out;
}

template <typename T>
void assign_weights(const WeightMap& weights, const ParamList<T>& list) {
  std::set<std::string> used;
  auto find = [&](const std::string& name) -> const WeightRecord& {
    auto it = weights.find(name);
    if (it == weights.end()) throw FormatError("weights: missing record " + name);
    used.insert(name);
    return it->second;
  };
  for (const auto& [name, t] : list.params) {
    const auto& rec = find(name);
    Shape shape(rec.dims.begin(), rec.dims.end());
    if (shape != t->shape())
      throw FormatError("weights: record " + name + " has shape " + to_string(shape) + ", model expects " +
                        to_string(t->shape()));
    std::copy(rec.data.begin(), rec.data.end(), t->value().begin());
  }
  for (const auto& [name, b] : list.buffers) {
    const auto& rec = find(name);
    if (rec.data.size() != b->size())
      throw FormatError("weights: buffer " + name + " has " + std::to_string(rec.data.size()) + " values, model expects " +
                        std::to_string(b->size()));
    std::copy(rec.data.begin(), rec.data.end(), b->begin());
  }
  for (const auto& [name, rec] : weights)
    if (!used.contains(name)) throw FormatError("weights: unexpected record " + name);
}

#define VELOPICK_INSTANTIATE_LAYERS(T)                                                          \
  template class Conv2d<T>;                                                                      \
  template class ConvTranspose2d<T>;                                                             \
  template class BatchNorm2d<T>;                                                                 \
  template class Adam<T>;                                                                        \
  template void adam_step<T>(std::span<T>, std::span<const T>, AdamState&, const AdamConfig&); \
  template void save_weights<T>(const std::filesystem::path&, const ParamList<T>&);             \
  template void assign_weights<T>(const WeightMap&, const ParamList<T>&);                       \
  template WeightMap snapshot_weights<T>(const ParamList<T>&);

VELOPICK_INSTANTIATE_LAYERS(float)
VELOPICK_INSTANTIATE_LAYERS(double)

#undef VELOPICK_INSTANTIATE_LAYERS

}  // namespace velopick::ag
