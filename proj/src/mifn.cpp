// SPDX-License-Identifier: Apache-2.0

#include "velopick/mifn.hpp"

#include <algorithm>

#include "velopick/core/errors.hpp"

namespace velopick::mifn {

using ag::Tensor;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoSfe: return "no-sfe";
    case Variant::kNoSgs: return "no-sgs";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no-sfe") return Variant::kNoSfe;
  if (name == "no-sgs") return Variant::kNoSgs;
  throw ConfigError("unknown model variant '" + name + "'");
}

std::size_t MifnConfig::input_channels() const {
  switch (variant) {
    case Variant::kFull: return 11;
    case Variant::kNoSfe: return 2;
    case Variant::kNoSgs: return 10;
  }
  return 11;
}

void MifnConfig::validate() const {
  if (depth == 0 || base_channels == 0 || cbl_channels1 == 0 || cbl_channels2 == 0)
    throw ConfigError("mifn: depth and channel counts must be >= 1");
  const std::size_t f = std::size_t{1} << depth;
  if (height == 0 || width == 0 || height % f != 0 || width % f != 0)
    throw ConfigError("mifn: input " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by 2^" + std::to_string(depth));
  if (cbl_kh == 0 || cbl_kw == 0 || cbl_sh == 0 || cbl_sw == 0)
    throw ConfigError("mifn: CBL kernel and stride must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("mifn: leaky slope must lie in (0, 1)");
}

template <typename T>
ConvBlock<T>::ConvBlock(const ag::LayerConfig& cfg, double s, Rng& rng)
    : conv(cfg, rng), bn(cfg.out_channels), slope(s) {}

template <typename T>
Tensor<T> ConvBlock<T>::operator()(const Tensor<T>& x, bool training) {
  auto y = bn(conv(x), training);
  return slope > 0.0 ? ag::leaky_relu(y, static_cast<T>(slope)) : ag::relu(y);
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, ag::ParamList<T>& out) {
  conv.collect(prefix + ".conv", out);
  bn.collect(prefix + ".bn", out);
}

namespace {

ag::LayerConfig cbr(std::size_t in, std::size_t out) {
  ag::LayerConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.kh = c.kw = 3;
  c.ph = c.pw = 1;
  c.bias = false;
  return c;
}

}  // namespace

template <typename T>
Mifn<T>::Mifn(const MifnConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t b = cfg.base_channels;

  if (cfg.uses_sgs()) {
    ag::LayerConfig c1;
    c1.in_channels = 1;
    c1.out_channels = cfg.cbl_channels1;
    c1.kh = cfg.cbl_kh;
    c1.kw = cfg.cbl_kw;
    c1.sh = cfg.cbl_sh;
    c1.sw = cfg.cbl_sw;
    c1.ph = cfg.cbl_kh / 2;
    c1.pw = cfg.cbl_kw / 2;
    c1.bias = false;
    ag::LayerConfig c2 = c1;
    c2.in_channels = cfg.cbl_channels1;
    c2.out_channels = cfg.cbl_channels2;
    cbl1_ = ConvBlock<T>(c1, cfg.leaky_slope, rng);
    cbl2_ = ConvBlock<T>(c2, cfg.leaky_slope, rng);
    ag::LayerConfig h;
    h.in_channels = 3 * cfg.cbl_channels2;
    h.out_channels = 1;
    h.kh = h.kw = 1;
    sgs_head_ = ag::Conv2d<T>(h, rng);
    cbl1_.collect("sgs.cbl1", params_);
    cbl2_.collect("sgs.cbl2", params_);
    sgs_head_.collect("sgs.head", params_);
  }

  std::size_t in = cfg.input_channels();
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t out = b << i;
    down_.emplace_back(ConvBlock<T>(cbr(in, out), 0.0, rng), ConvBlock<T>(cbr(out, out), 0.0, rng));
    in = out;
  }
  bottleneck_ = {ConvBlock<T>(cbr(in, b << cfg.depth), 0.0, rng),
                 ConvBlock<T>(cbr(b << cfg.depth, b << cfg.depth), 0.0, rng)};
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t out = b << i;
    ag::LayerConfig t;
    t.in_channels = out * 2;
    t.out_channels = out;
    t.kh = t.kw = 2;
    t.sh = t.sw = 2;
    up_.emplace_back(t, rng);
    up_blocks_.emplace_back(ConvBlock<T>(cbr(out * 2, out), 0.0, rng), ConvBlock<T>(cbr(out, out), 0.0, rng));
  }
  ag::LayerConfig h;
  h.in_channels = b;
  h.out_channels = 1;
  h.ph = h.pw = 1;
  head_ = ag::Conv2d<T>(h, rng);
  // Start near the label density (a few hot cells per row) rather than 0.5.
  std::fill(head_.bias.value().begin(), head_.bias.value().end(), T(-3));
  skip_disabled_.assign(cfg.depth, false);

  for (std::size_t i = 0; i < cfg.depth; ++i) {
    down_[i].first.collect("down" + std::to_string(i) + ".a", params_);
    down_[i].second.collect("down" + std::to_string(i) + ".b", params_);
  }
  bottleneck_.first.collect("bottleneck.a", params_);
  bottleneck_.second.collect("bottleneck.b", params_);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    up_[i].collect("up" + std::to_string(i) + ".tconv", params_);
    up_blocks_[i].first.collect("up" + std::to_string(i) + ".a", params_);
    up_blocks_[i].second.collect("up" + std::to_string(i) + ".b", params_);
  }
  head_.collect("head", params_);
}

template <typename T>
Tensor<T> Mifn<T>::sgs_weights(const Tensor<T>& slices, bool training) {
  if (!cfg_.uses_sgs()) throw ConfigError("mifn: variant " + variant_name(cfg_.variant) + " has no SGS encoder");
  auto y = cbl2_(cbl1_(slices, training), training);
  y = sgs_head_(ag::spp(y));
  y = ag::mean_width(y);
  return ag::sigmoid(ag::bilinear_resize(y, cfg_.height, 1));
}

template <typename T>
Tensor<T> Mifn<T>::encode_sgs(const Tensor<T>& slices, const Tensor<T>& masks, std::size_t m, bool training) {
  if (m == 0 || slices.dim(0) != masks.dim(0) || slices.dim(0) % m != 0)
    throw DomainError("encode_sgs: " + std::to_string(slices.dim(0)) + " slices vs " +
                      std::to_string(masks.dim(0)) + " masks for m = " + std::to_string(m));
  if (masks.dim(2) != cfg_.height || masks.dim(3) != cfg_.width)
    throw ShapeError("encode_sgs: masks " + ag::to_string(masks.shape()) + " do not match model input " +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  auto s = sgs_weights(slices, training);
  return ag::clamp01(ag::group_sum(ag::scale_rows(masks, s), m));
}

template <typename T>
Tensor<T> Mifn<T>::unet(const Tensor<T>& features, bool training) {
  if (features.rank() != 4 || features.dim(1) != cfg_.input_channels() || features.dim(2) != cfg_.height ||
      features.dim(3) != cfg_.width)
    throw ShapeError("mifn: features " + ag::to_string(features.shape()) + ", expected [N," +
                     std::to_string(cfg_.input_channels()) + "," + std::to_string(cfg_.height) + "," +
                     std::to_string(cfg_.width) + "]");
  std::vector<Tensor<T>> skips;
  Tensor<T> x = features;
  for (auto& [a, b] : down_) {
    x = b(a(x, training), training);
    skips.push_back(x);
    x = ag::max_pool2d(x, 2, 2, 2, 2);
  }
  x = bottleneck_.second(bottleneck_.first(x, training), training);
  for (std::size_t i = cfg_.depth; i-- > 0;) {
    x = ag::relu(up_[i](x));
    Tensor<T> skip = skips[i];
    if (skip_disabled_[i]) skip = Tensor<T>::zeros(skip.shape());
    x = ag::concat_channels<T>({x, skip});
    x = up_blocks_[i].second(up_blocks_[i].first(x, training), training);
  }
  return ag::sigmoid(head_(x));
}

template <typename T>
Tensor<T> Mifn<T>::forward(const std::vector<const Sample*>& batch, bool training) {
  auto features = batch_features<T>(batch, cfg_);
  if (cfg_.uses_sgs()) {
    const std::size_t m = batch.front()->slices.size();
    auto sgs = encode_sgs(batch_slices<T>(batch), batch_masks<T>(batch), m, training);
    features = ag::concat_channels<T>({features, sgs});
  }
  return unet(features, training);
}

template <typename T>
void Mifn<T>::set_skip_disabled(std::size_t level, bool disabled) {
  skip_disabled_.at(level) = disabled;
}

template <typename T>
std::vector<Tensor<T>*> Mifn<T>::trainable() {
  std::vector<Tensor<T>*> out;
  for (auto& [name, t] : params_.params) out.push_back(t);
  return out;
}

template <typename T>
void Mifn<T>::save(const std::filesystem::path& path) const {
  ag::save_weights(path, params_);
}

template <typename T>
void Mifn<T>::load(const std::filesystem::path& path) {
  ag::assign_weights(ag::read_weights(path), params_);
}

template <typename T>
ag::WeightMap Mifn<T>::snapshot() const {
  return ag::snapshot_weights(params_);
}

template <typename T>
void Mifn<T>::restore(const ag::WeightMap& weights) {
  ag::assign_weights(weights, params_);
}

// ---------------------------------------------------------------------------

namespace {

void check_grid(const Grid2D& g, std::size_t rows, std::size_t cols, const char* what) {
  if (g.rows() != rows || g.cols() != cols)
    throw ShapeError(std::string("mifn: ") + what + " is " + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

template <typename T>
Tensor<T> stack_grids(const std::vector<const Sample*>& batch, auto&& grids_of, const char* what) {
  if (batch.empty()) throw ShapeError("mifn: empty batch");
  const auto& first = grids_of(*batch.front());
  if (first.empty()) throw ShapeError(std::string("mifn: sample has no ") + what);
  const std::size_t per = first.size(), rows = first.front().rows(), cols = first.front().cols();
  std::vector<T> v;
  v.reserve(batch.size() * per * rows * cols);
  for (const Sample* s : batch) {
    const auto& grids = grids_of(*s);
    if (grids.size() != per)
      throw ShapeError(std::string("mifn: inconsistent number of ") + what + " across the batch");
    for (const auto& g : grids) {
      check_grid(g, rows, cols, what);
      v.insert(v.end(), g.values().begin(), g.values().end());
    }
  }
  return Tensor<T>::from({batch.size() * per, 1, rows, cols}, std::move(v));
}

}  // namespace

template <typename T>
Tensor<T> batch_features(const std::vector<const Sample*>& batch, const MifnConfig& cfg) {
  if (batch.empty()) throw ShapeError("mifn: empty batch");
  const std::size_t channels = cfg.variant == Variant::kNoSfe ? 1 : 10;
  const std::size_t plane = cfg.height * cfg.width;
  std::vector<T> v;
  v.reserve(batch.size() * channels * plane);
  for (const Sample* s : batch) {
    if (s->spectrum.size() < channels)
      throw ShapeError("mifn: sample has " + std::to_string(s->spectrum.size()) + " spectrum channels, need " +
                       std::to_string(channels));
    for (std::size_t c = 0; c < channels; ++c) {
      check_grid(s->spectrum[c], cfg.height, cfg.width, "spectrum channel");
      v.insert(v.end(), s->spectrum[c].values().begin(), s->spectrum[c].values().end());
    }
  }
  return Tensor<T>::from({batch.size(), channels, cfg.height, cfg.width}, std::move(v));
}

template <typename T>
Tensor<T> batch_slices(const std::vector<const Sample*>& batch) {
  return stack_grids<T>(batch, [](const Sample& s) -> const std::vector<Grid2D>& { return s.slices; }, "SGS slices");
}

template <typename T>
Tensor<T> batch_masks(const std::vector<const Sample*>& batch) {
  return stack_grids<T>(batch, [](const Sample& s) -> const std::vector<Grid2D>& { return s.masks; }, "VC masks");
}

template <typename T>
Tensor<T> batch_labels(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw ShapeError("mifn: empty batch");
  const std::size_t rows = batch.front()->label.rows(), cols = batch.front()->label.cols();
  std::vector<T> v;
  v.reserve(batch.size() * rows * cols);
  for (const Sample* s : batch) {
    check_grid(s->label, rows, cols, "label");
    v.insert(v.end(), s->label.values().begin(), s->label.values().end());
  }
  return Tensor<T>::from({batch.size(), 1, rows, cols}, std::move(v));
}

Grid2D predict(Mifn<float>& net, const Sample& sample) {
  ag::NoGradGuard guard;
  auto out = net.forward({&sample}, false);
  const auto& cfg = net.config();
  return Grid2D(cfg.height, cfg.width, std::vector<float>(out.value().begin(), out.value().end()));
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template class Mifn<float>;
template class Mifn<double>;
template Tensor<float> batch_features<float>(const std::vector<const Sample*>&, const MifnConfig&);
template Tensor<double> batch_features<double>(const std::vector<const Sample*>&, const MifnConfig&);
template Tensor<float> batch_slices<float>(const std::vector<const Sample*>&);
template Tensor<double> batch_slices<double>(const std::vector<const Sample*>&);
template Tensor<float> batch_masks<float>(const std::vector<const Sample*>&);
template Tensor<double> batch_masks<double>(const std::vector<const Sample*>&);
template Tensor<float> batch_labels<float>(const std::vector<const Sample*>&);
template Tensor<double> batch_labels<double>(const std::vector<const Sample*>&);

}  // namespace velopick::mifn
