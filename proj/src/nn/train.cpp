#include "sct/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/nn/adam.hpp"
#include "sct/rng.hpp"

namespace sct::nn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(lr0 > 0) || !std::isfinite(lr0)) throw UsageError("lr0 must be positive");
  if (!(lr_decay > 0) || !std::isfinite(lr_decay)) throw UsageError("lr_decay must be positive");
  if (patience < 1 || patience > max_epochs) throw UsageError("patience must be in [1, max_epochs]");
  if (repeats_per_epoch < 1) throw UsageError("repeats_per_epoch must be >= 1");
}

json TrainConfig::to_json() const {
  return {{"max_epochs", max_epochs}, {"batch_size", batch_size}, {"lr0", lr0},
          {"lr_decay", lr_decay},     {"patience", patience},     {"seed", seed},
          {"repeats_per_epoch", repeats_per_epoch}, {"zero_init_output", zero_init_output}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.repeats_per_epoch = j.value("repeats_per_epoch", c.repeats_per_epoch);
  c.zero_init_output = j.value("zero_init_output", c.zero_init_output);
  return c;
}

float quantize_unit(float v) { return static_cast<float>(std::nearbyint(static_cast<double>(v) * 65536.0) / 65536.0); }

ResidualPair make_residual_pair(const ImageGrid& sparse_norm, const ImageGrid& full_norm, int views, std::string id) {
  if (sparse_norm.unit != UnitTag::Normalized || full_norm.unit != UnitTag::Normalized)
    throw DataError("residual pairs need normalized images");
  if (sparse_norm.width != full_norm.width || sparse_norm.height != full_norm.height)
    throw DataError("sparse and full-view images differ in shape");
  sparse_norm.validate();
  full_norm.validate();
  ResidualPair p;
  p.views = views;
  p.id = std::move(id);
  p.input = sparse_norm;
  p.label = sparse_norm;
  p.label.unit = UnitTag::Residual;
  for (std::size_t i = 0; i < sparse_norm.size(); ++i) {
    const float s = quantize_unit(sparse_norm.values[i]);
    p.input.values[i] = s;
    p.label.values[i] = s - quantize_unit(full_norm.values[i]);
  }
  return p;
}

namespace {

void check_pairs(const std::vector<ResidualPair>& pairs, const UNetConfig& cfg, const char* what) {
  if (pairs.empty()) throw DataError(std::string(what) + " split is empty");
  for (const auto& p : pairs) {
    if (p.input.width != cfg.input_size || p.input.height != cfg.input_size || p.label.width != cfg.input_size ||
        p.label.height != cfg.input_size || p.input.size() != p.label.size())
      throw DataError(std::string(what) + " pair '" + p.id + "' does not match network input_size " +
                      std::to_string(cfg.input_size));
  }
}

Tensor4<float> stack(const std::vector<ResidualPair>& pairs, std::span<const std::size_t> idx, bool labels) {
  const auto& first = pairs[idx[0]].input;
  Tensor4<float> t(static_cast<int>(idx.size()), 1, first.height, first.width);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& src = labels ? pairs[idx[b]].label.values : pairs[idx[b]].input.values;
    std::copy(src.begin(), src.end(), t.plane(static_cast<int>(b), 0));
  }
  return t;
}

}  // namespace

double evaluate_loss(const UNetParams<float>& params, const std::vector<ResidualPair>& pairs, int batch_size) {
  check_pairs(pairs, params.cfg, "evaluation");
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::span<const std::size_t> batch(idx.data() + b, std::min<std::size_t>(batch_size, idx.size() - b));
    const auto x = stack(pairs, batch, false);
    const auto y = stack(pairs, batch, true);
    const auto pred = unet_predict(params, x);
    total += mse_loss(pred, y).loss * static_cast<double>(y.size());
    count += y.size();
  }
  return total / static_cast<double>(count);
}

TrainResult train(const std::vector<ResidualPair>& train_set, const std::vector<ResidualPair>& val_set,
                  const TrainConfig& tcfg, const UNetConfig& cfg, const TrainHooks& hooks) {
  tcfg.validate();
  cfg.validate();
  check_pairs(train_set, cfg, "training");
  check_pairs(val_set, cfg, "validation");

  UNetParams<float> params = init_unet<float>(cfg, derive_seed(tcfg.seed, 1));
  if (tcfg.zero_init_output) {
    const int last = params.layout.final_conv;
    std::fill(params.weight(last).begin(), params.weight(last).end(), 0.0f);
    std::fill(params.bias(last).begin(), params.bias(last).end(), 0.0f);
  }
  Rng shuffle_rng(derive_seed(tcfg.seed, 2));
  AdamState<float> adam;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  double lr = tcfg.lr0;
  int since_best = 0;
  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    if (epoch > 0) lr *= tcfg.lr_decay;
    const double epoch_lr = hooks.lr_override ? hooks.lr_override(epoch, lr) : lr;

    std::vector<std::size_t> order;
    for (int r = 0; r < tcfg.repeats_per_epoch; ++r)
      for (std::size_t i = 0; i < train_set.size(); ++i) order.push_back(i);
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < order.size(); b += tcfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + b,
                                               std::min<std::size_t>(tcfg.batch_size, order.size() - b));
      const auto x = stack(train_set, batch, false);
      const auto y = stack(train_set, batch, true);
      const std::vector<float> saved_stats = hooks.freeze_running_stats ? params.buffers : std::vector<float>{};
      UNetCache<float> cache;
      const auto pred = unet_forward(params, x, Mode::Train, &cache);
      if (hooks.freeze_running_stats) params.buffers = saved_stats;
      const auto loss = mse_loss(pred, y);
      if (!std::isfinite(loss.loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << b / tcfg.batch_size
            << " (lr " << epoch_lr << ")";
        throw NumericError(msg.str());
      }
      const auto grads = unet_backward(params, cache, loss.grad);
      adam_step<float>(params.learnable, grads, adam, epoch_lr);
      loss_sum += loss.loss * static_cast<double>(batch.size());
      loss_count += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = epoch_lr;
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    rec.val_loss = evaluate_loss(params, val_set, tcfg.batch_size);
    if (!std::isfinite(rec.val_loss))
      throw NumericError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

ImageGrid subtract_residual(const ImageGrid& sparse_norm, const ImageGrid& residual) {
  if (sparse_norm.width != residual.width || sparse_norm.height != residual.height)
    throw DataError("residual shape does not match the sparse-view image");
  ImageGrid out = sparse_norm;
  out.unit = UnitTag::Normalized;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values[i] = std::clamp(sparse_norm.values[i] - residual.values[i], 0.0f, 1.0f);
  return out;
}

ImageGrid predict_residual(const ImageGrid& sparse_norm, const UNetParams<float>& params) {
  if (sparse_norm.unit != UnitTag::Normalized) throw DataError("network input must be a normalized image");
  if (sparse_norm.width != params.cfg.input_size || sparse_norm.height != params.cfg.input_size)
    throw DataError("image size " + std::to_string(sparse_norm.width) + " does not match network input_size " +
                    std::to_string(params.cfg.input_size));
  Tensor4<float> x(1, 1, sparse_norm.height, sparse_norm.width);
  std::copy(sparse_norm.values.begin(), sparse_norm.values.end(), x.data.begin());
  const auto pred = unet_predict(params, x);
  ImageGrid out = sparse_norm;
  out.unit = UnitTag::Residual;
  std::copy(pred.data.begin(), pred.data.end(), out.values.begin());
  return out;
}

ImageGrid postprocess(const ImageGrid& sparse_norm, const UNetParams<float>& params) {
  return subtract_residual(sparse_norm, predict_residual(sparse_norm, params));
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    out += line;
  }
  io::write_text(path, out);
}

}  // namespace sct::nn
