#pragma once

// Checkpoint file:
//   bytes 0-7   magic "SCTLAB\0\1"
//   bytes 8-11  header length N, uint32 little-endian
//   N bytes     header JSON: format version, network config, epoch,
//               validation loss, and the tensor table (name, shape, offset)
//   rest        float32 little-endian values; per conv layer in layout order:
//               weight, bias, then gamma, beta, running_mean, running_var
//               for layers with batch norm.

#include <filesystem>

#include <json.hpp>

#include "sct/nn/unet.hpp"

namespace sct::nn {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int epoch = -1;
  double val_loss = 0;
  int views = 0;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const UNetParams<float>& params, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  UNetParams<float> params;
  CheckpointMeta meta;
};

/// Throws DataError on a bad magic, unsupported version or size mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sct::nn
