#include "sct/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "sct/error.hpp"
#include "sct/io.hpp"

namespace sct::nn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'C', 'T', 'L', 'A', 'B', '\0', '\1'};

struct Entry {
  std::string name;
  bool buffer;
  std::size_t offset, count;
  std::vector<int> shape;
};

std::vector<Entry> tensor_table(const UNetLayout& L) {
  std::vector<Entry> t;
  for (const auto& s : L.convs) {
    t.push_back({s.name + ".weight", false, s.weight, s.weight_count(), {s.cout, s.cin, s.k, s.k}});
    t.push_back({s.name + ".bias", false, s.bias, static_cast<std::size_t>(s.cout), {s.cout}});
    if (s.bn) {
      t.push_back({s.name + ".gamma", false, s.gamma, static_cast<std::size_t>(s.cout), {s.cout}});
      t.push_back({s.name + ".beta", false, s.beta, static_cast<std::size_t>(s.cout), {s.cout}});
      t.push_back({s.name + ".running_mean", true, s.running_mean, static_cast<std::size_t>(s.cout), {s.cout}});
      t.push_back({s.name + ".running_var", true, s.running_var, static_cast<std::size_t>(s.cout), {s.cout}});
    }
  }
  return t;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UNetParams<float>& params, const CheckpointMeta& meta) {
  params.validate();
  const auto table = tensor_table(params.layout);
  json tensors = json::array();
  std::size_t blob_offset = 0;
  for (const auto& e : table) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", blob_offset}});
    blob_offset += e.count;
  }
  const json header = {{"format", "sparse-ct-lab checkpoint"},
                       {"version", kCheckpointVersion},
                       {"cfg", params.cfg.to_json()},
                       {"epoch", meta.epoch},
                       {"val_loss", meta.val_loss},
                       {"views", meta.views},
                       {"extra", meta.extra},
                       {"value_count", blob_offset},
                       {"tensors", tensors}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> bytes(kMagic, kMagic + 8);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  bytes.reserve(bytes.size() + blob_offset * 4);
  for (const auto& e : table) {
    const float* src = (e.buffer ? params.buffers.data() : params.learnable.data()) + e.offset;
    for (std::size_t i = 0; i < e.count; ++i) put_u32(bytes, std::bit_cast<std::uint32_t>(src[i]));
  }
  io::write_bytes(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw DataError(where + ": not a checkpoint file");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (bytes.size() < 12ull + hlen) throw DataError(where + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const json::exception& e) {
    throw DataError(where + ": bad header: " + e.what());
  }
  LoadedCheckpoint out;
  try {
    if (header.at("version").get<int>() != kCheckpointVersion)
      throw DataError(where + ": unsupported version " + header.at("version").dump());
    out.params.cfg = UNetConfig::from_json(header.at("cfg"));
    out.meta.epoch = header.value("epoch", -1);
    out.meta.val_loss = header.value("val_loss", 0.0);
    out.meta.views = header.value("views", 0);
    out.meta.extra = header.value("extra", json::object());
  } catch (const json::exception& e) {
    throw DataError(where + ": bad header: " + e.what());
  } catch (const UsageError& e) {
    throw DataError(where + ": bad network config: " + e.what());
  }
  out.params.layout = UNetLayout::build(out.params.cfg);
  out.params.learnable.assign(out.params.layout.n_learnable, 0.0f);
  out.params.buffers.assign(out.params.layout.n_buffers, 0.0f);
  const auto table = tensor_table(out.params.layout);
  std::size_t total = 0;
  for (const auto& e : table) total += e.count;
  if (bytes.size() != 12ull + hlen + total * 4)
    throw DataError(where + ": parameter blob has " + std::to_string(bytes.size() - 12 - hlen) + " bytes, expected " +
                    std::to_string(total * 4));
  std::size_t pos = 12 + hlen;
  for (const auto& e : table) {
    float* dst = (e.buffer ? out.params.buffers.data() : out.params.learnable.data()) + e.offset;
    for (std::size_t i = 0; i < e.count; ++i, pos += 4) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[pos + b]) << (8 * b);
      dst[i] = std::bit_cast<float>(u);
    }
  }
  out.params.validate();
  return out;
}

}  // namespace sct::nn
