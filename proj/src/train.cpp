// SPDX-License-Identifier: Apache-2.0

#include "velopick/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "velopick/ag/ops.hpp"
#include "velopick/core/errors.hpp"

namespace velopick::train {

Grid2D soft_label(const VelocityCurve& curve, const SpectrumAxes& axes) {
  const std::size_t rows = axes.time.n_t, cols = axes.velocity.n_v;
  const auto v = interp_curve(curve, axes.time);
  std::vector<std::size_t> centre(rows);
  std::size_t clamped = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double q = std::round(axes.velocity.position(v[r]));
    if (q < 0.0 || q > static_cast<double>(cols - 1)) ++clamped;
    centre[r] = static_cast<std::size_t>(std::clamp(q, 0.0, static_cast<double>(cols - 1)));
  }
  if (clamped > 0)
    spdlog::warn("soft_label: {} rows outside the velocity axis clamped to edge columns", clamped);

  Grid2D mask(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) mask(r, centre[r]) = kLabelCenter;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
        const auto cc = static_cast<std::ptrdiff_t>(centre[r]) + dc;
        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) || cc >= static_cast<std::ptrdiff_t>(cols))
          continue;
        float& cell = mask(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        if (cell != kLabelCenter) cell = kLabelHalo;
      }
    }
  }
  return mask;
}

double bce(const Grid2D& pred, const Grid2D& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("bce: prediction and target differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(double{pred.values()[i]}, ag::kBceClamp, 1.0 - ag::kBceClamp);
    const double t = target.values()[i];
    s += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return -s / static_cast<double>(pred.size());
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_iterations == 0 || validate_every == 0 || patience == 0 || !(lr > 0.0))
    throw ConfigError("train: batch size, learning rate, iteration limits and patience must be positive");
}

bool EarlyStopper::update(double loss) {
  improved_ = loss < best_;
  if (improved_) {
    best_ = loss;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

double evaluate(mifn::Mifn<float>& net, const std::vector<mifn::Sample>& samples, std::size_t batch_size) {
  if (samples.empty()) throw ConfigError("evaluate: no samples");
  ag::NoGradGuard guard;
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    std::vector<const mifn::Sample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) batch.push_back(&samples[i]);
    auto pred = net.forward(batch, false);
    auto loss = ag::bce_loss(pred, mifn::batch_labels<float>(batch));
    total += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(samples.size());
}

TrainResult fit(mifn::Mifn<float>& net, const std::vector<mifn::Sample>& train_set,
                const std::vector<mifn::Sample>& val_set, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: the training split is empty");
  if (val_set.empty()) throw ConfigError("train: the validation split is empty");

  Rng rng(cfg.seed);
  const std::size_t batch_size = std::min(cfg.batch_size, train_set.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::size_t cursor = 0;

  ag::Adam<float> adam(net.trainable(), ag::AdamConfig{cfg.lr});
  EarlyStopper stopper(cfg.patience);
  TrainResult result;
  ag::WeightMap best = net.snapshot();
  double running = 0.0;
  std::size_t running_n = 0;

  auto validate = [&](std::size_t iter) {
    HistoryRow row{iter, running_n ? running / static_cast<double>(running_n) : 0.0,
                   evaluate(net, val_set, cfg.batch_size)};
    running = 0.0;
    running_n = 0;
    result.history.push_back(row);
    const bool stop = stopper.update(row.val_bce);
    if (stopper.improved()) {
      best = net.snapshot();
      result.best_iter = iter;
      result.best_val = row.val_bce;
    }
    if (progress) progress(row);
    return stop;
  };

  for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
    if (cursor + batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      cursor = 0;
    }
    std::vector<const mifn::Sample*> batch;
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(&train_set[order[cursor + i]]);
    cursor += batch_size;

    adam.zero_grad();
    auto pred = net.forward(batch, true);
    auto loss = ag::bce_loss(pred, mifn::batch_labels<float>(batch));
    loss.backward();
    adam.step();
    running += loss.item();
    ++running_n;
    result.iterations = iter;

    if (iter % cfg.validate_every == 0 && validate(iter)) {
      result.stopped_early = true;
      break;
    }
  }
  if (!result.stopped_early && result.iterations % cfg.validate_every != 0) validate(result.iterations);
  net.restore(best);
  return result;
}

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream f(path);
  if (!f) throw MissingFileError("cannot write " + path.string());
  f.precision(9);
  f << "iter,train_bce,val_bce\n";
  for (const auto& r : history) f << r.iter << ',' << r.train_bce << ',' << r.val_bce << '\n';
}

}  // namespace velopick::train
