#pragma once

// Synthetic thorax slices with one lung nodule and its ground-truth mask,
// plus loaders for externally supplied raw slices.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/image.hpp"

namespace sct::phantom {

namespace fs = std::filesystem;

inline constexpr float kAirHU = -1000.0f;
inline constexpr float kSoftTissueHU = 40.0f;
inline constexpr float kLungHU = -800.0f;
inline constexpr float kVesselHU = 50.0f;
inline constexpr float kNoduleHU = 20.0f;

struct PhantomSpec {
  int size = 128;
  double pixel_size = 2.0;        // mm
  double nodule_diameter = 15.0;  // mm; 0 makes a healthy slice
  std::optional<std::pair<double, double>> nodule_center;  // (col, row) in pixels; random when empty
  int n_vessels = 8;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PhantomSpec from_json(const nlohmann::json& j);
};

struct LabeledSlice {
  ImageGrid image;  // HU
  Mask nodule_mask;
  nlohmann::json meta;  // generating spec or source path

  bool diseased() const { return !nodule_mask.empty(); }
};

/// Deterministic for a fixed spec. Throws DataError if the nodule cannot be
/// placed fully inside a lung field.
LabeledSlice generate_phantom(const PhantomSpec& spec);

/// Reads "<path>" (float32 LE) with the given header and, when present, the
/// companion mask "<path>.mask.json".
LabeledSlice load_raw_slice(const fs::path& path, const nlohmann::json& header);
LabeledSlice load_raw_slice(const fs::path& path);

/// Writes the raw image, its header sidecar and (if diseased) the companion mask.
void write_labeled_slice(const fs::path& path, const LabeledSlice& slice);

fs::path mask_path_for(const fs::path& slice_path);

// ---------------------------------------------------------------------------
// Dataset

struct DatasetSpec {
  int n_subjects = 14;  // model-assessment subjects (all diseased)
  int slices_per_subject = 4;
  double train_fraction = 12.0 / 22.0;
  double val_fraction = 2.0 / 22.0;
  // Explicit split sizes override the fractions when set.
  std::optional<int> n_train, n_val, n_test;
  int study_diseased = 0;  // one slice per reader-study subject
  int study_healthy = 0;
  double min_nodule_mm = 10.0;
  double max_nodule_mm = 20.0;
  PhantomSpec base;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct ManifestEntry {
  std::string subject_id;
  std::string slice_path;  // relative to the manifest directory
  std::optional<std::string> mask_path;
  std::string split;  // train | val | test | study
  bool diseased = false;
};

struct SubjectSplit {
  std::string subject_id;
  std::string split;
};

/// Subject-level split assignment. Subjects never straddle splits.
std::vector<SubjectSplit> assign_splits(const DatasetSpec& spec);

/// Generates every slice under `dir` and writes `dir/manifest.json`.
std::vector<ManifestEntry> build_dataset(const DatasetSpec& spec, const fs::path& dir);

nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> manifest_from_json(const nlohmann::json& j);
std::vector<ManifestEntry> read_manifest(const fs::path& path);

}  // namespace sct::phantom
