#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/image.hpp"
#include "sct/nn/unet.hpp"

namespace sct::nn {

struct TrainConfig {
  int max_epochs = 30;
  int batch_size = 6;
  double lr0 = 1e-3;
  double lr_decay = 0.9048374180359595;  // e^-0.1 per epoch
  int patience = 5;
  std::uint64_t seed = 0;
  /// Passes over the training pairs per epoch.
  int repeats_per_epoch = 1;
  /// Start from a network that predicts a zero residual.
  bool zero_init_output = true;

  /// Throws UsageError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Sparse-view input and its pure-artifact label (sparse - full), both on a
/// 2^-16 grid so that input - label reproduces the full-view image exactly.
struct ResidualPair {
  ImageGrid input;  // normalized
  ImageGrid label;  // residual
  int views = 0;
  std::string id;
};

/// Rounds a normalized value to the nearest multiple of 2^-16.
float quantize_unit(float v);

/// Throws DataError on shape or unit mismatch.
ResidualPair make_residual_pair(const ImageGrid& sparse_norm, const ImageGrid& full_norm, int views, std::string id = {});

struct EpochRecord {
  int epoch = 0;  // 0-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct TrainHooks {
  /// Replaces the scheduled learning rate of an epoch.
  std::function<double(int epoch, double scheduled)> lr_override;
  /// Keeps batch-norm running statistics fixed during training.
  bool freeze_running_stats = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  UNetParams<float> best;
  int best_epoch = -1;
  double best_val_loss = 0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

/// Throws DataError on empty splits or mismatched shapes and NumericError when
/// the loss becomes non-finite.
TrainResult train(const std::vector<ResidualPair>& train_set, const std::vector<ResidualPair>& val_set,
                  const TrainConfig& tcfg, const UNetConfig& cfg, const TrainHooks& hooks = {});

/// Mean squared error of eval-mode predictions against the labels.
double evaluate_loss(const UNetParams<float>& params, const std::vector<ResidualPair>& pairs, int batch_size = 6);

/// clamp(sparse - residual, 0, 1).
ImageGrid subtract_residual(const ImageGrid& sparse_norm, const ImageGrid& residual);

/// Runs the network in eval mode and subtracts its residual prediction.
ImageGrid postprocess(const ImageGrid& sparse_norm, const UNetParams<float>& params);

/// Predicted residual for one normalized image.
ImageGrid predict_residual(const ImageGrid& sparse_norm, const UNetParams<float>& params);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace sct::nn
