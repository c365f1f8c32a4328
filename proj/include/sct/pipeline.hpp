#pragma once
// End-to-end stages behind the command line tool. Every stage reads its
// inputs from and writes its outputs under the configured work directory:
//
//   dataset/   phantom slices and manifest.json
//   sim/       full-view, sparse and residual images per slice, manifest.json
//   model/vN/  checkpoint.bin and history.csv per trained view level
//   infer/     postprocessed images
//   eval/      per_image.csv, metrics.csv, summary.json
//   study/     reader-study images, store.jsonl, readers.json, analysis/
//   report/    table4.csv, table5.csv
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/nn/train.hpp"
#include "sct/nn/unet.hpp"
#include "sct/phantom.hpp"
#include "sct/service.hpp"
#include "sct/study.hpp"
#include "sct/tomo.hpp"

namespace sct::pipeline {

namespace fs = std::filesystem;

struct Seeds {
  std::uint64_t phantom = 1;
  std::uint64_t train = 2;
  std::uint64_t study = 3;
};

struct PipelineConfig {
  fs::path work_dir = "run";
  phantom::DatasetSpec dataset;
  int full_views = 2048;
  std::vector<int> levels{16, 32, 64, 128, 256, 512};
  tomo::Filter filter = tomo::Filter::RamLak;
  nn::UNetConfig network;
  nn::TrainConfig training;
  std::vector<int> train_views{64};
  Seeds seeds;
  std::string study_id = "study";
  std::vector<std::string> reader_ids{"R1", "R2", "R3"};
  study::AnalyzeOptions analyze;
  service::ServiceConfig service;
  /// Optional explicit comparison for `evaluate`: every image in the
  /// candidate directory against the same-named image in the reference.
  std::optional<fs::path> evaluate_reference, evaluate_candidate;

  /// Throws UsageError on an inconsistent configuration.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are ignored; malformed values throw UsageError.
  static PipelineConfig from_json(const nlohmann::json& j);

  fs::path dataset_dir() const { return work_dir / "dataset"; }
  fs::path sim_dir() const { return work_dir / "sim"; }
  fs::path model_dir(int views) const { return work_dir / "model" / ("v" + std::to_string(views)); }
  fs::path infer_dir() const { return work_dir / "infer"; }
  fs::path eval_dir() const { return work_dir / "eval"; }
  fs::path study_dir() const { return work_dir / "study"; }
  fs::path report_dir() const { return work_dir / "report"; }
};

/// Exclusive advisory lock on "<dir>/.lock", created on demand. Throws
/// DataError when another process holds it.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

struct SimLevel {
  std::string sparse;    // normalized, raw float32
  std::string residual;  // sparse - full
};

struct SimEntry {
  std::string slice_id;  // "<subject>/sliceNN"
  std::string subject_id;
  std::string split;
  bool diseased = false;
  std::string full;
  std::optional<std::string> mask;
  std::map<int, SimLevel> levels;
};

struct SimManifest {
  int full_views = 0;
  std::vector<int> levels;
  std::vector<SimEntry> entries;

  nlohmann::json to_json() const;
  static SimManifest from_json(const nlohmann::json& j);
};

SimManifest read_sim_manifest(const fs::path& sim_dir);

/// Per-image result of evaluate.
struct ImageMetrics {
  std::string slice_id;
  int views = 0;
  std::string variant;  // sparse | processed
  double mse = 0;
  double ssim = 0;
};

std::vector<phantom::ManifestEntry> run_phantom(const PipelineConfig& cfg);
SimManifest run_simulate(const PipelineConfig& cfg);
/// Trains one network per entry of train_views; returns the trained levels.
std::vector<int> run_train(const PipelineConfig& cfg);
/// Postprocesses every test and study slice at every trained level.
void run_infer(const PipelineConfig& cfg);
std::vector<ImageMetrics> run_evaluate(const PipelineConfig& cfg);
/// Creates the study store and returns its readers with their tokens.
std::vector<study::Reader> run_study_init(const PipelineConfig& cfg);
/// Serves until SIGINT or SIGTERM.
void run_study_serve(const PipelineConfig& cfg);
study::StudyReport run_study_analyze(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

}  // namespace sct::pipeline
