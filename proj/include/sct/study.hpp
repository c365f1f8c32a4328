#pragma once

// Blinded multireader study: presentation set, append-only annotation store
// and the statistical analysis of the collected reads.
//
// Store file (JSON lines, one record per line, each with "type" and "schema"):
//   study       {study_id, seed, views}
//   subject     {subject_id, diseased, truth: {width, height, rle}}
//   item        {item_id, subject_id, views, variant, image}
//   reader      {reader_id, token, order: [item_id...]}
//   annotation  {reader_id, item_id, quality, confidence, artifacts, mask, timestamp}
// A truncated final line (interrupted append) is dropped on open.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/error.hpp"
#include "sct/image.hpp"
#include "sct/metrics.hpp"
#include "sct/stats.hpp"

namespace sct::study {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::array<int, 5> kStudyViews{16, 32, 64, 128, 256};

inline constexpr int kMinScore = 1;
inline constexpr int kMaxQuality = 6;
inline constexpr int kMaxConfidence = 6;
inline constexpr int kMaxArtifacts = 4;

enum class ImageVariant { Sparse, Processed };
std::string to_string(ImageVariant v);
ImageVariant image_variant_from_string(const std::string& s);

/// Rejected annotation; reason is a short machine-readable code.
class AnnotationError : public DataError {
 public:
  AnnotationError(std::string reason, const std::string& what) : DataError(what), reason_(std::move(reason)) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

struct StudySubject {
  std::string subject_id;
  bool diseased = false;
  Mask truth;
  /// Image reference per (views, variant).
  std::map<std::pair<int, ImageVariant>, std::string> images;
};

struct PresentationItem {
  std::string item_id;
  std::string subject_id;
  int views = 0;
  ImageVariant variant = ImageVariant::Sparse;
  std::string image;
};

/// Every subject at every study view level in both variants, with random
/// opaque ids drawn from the seed. Throws DataError on a missing rendition.
std::vector<PresentationItem> build_presentation_set(const std::vector<StudySubject>& subjects, std::uint64_t seed);

/// Seeded shuffle of the item ids.
std::vector<std::string> presentation_order(const std::vector<PresentationItem>& items, std::uint64_t seed);

/// 128-bit random hex token from the system entropy source.
std::string random_token();

struct Annotation {
  std::string reader_id;
  std::string item_id;
  int quality = 0;
  int confidence = 0;
  int artifacts = 0;
  Mask mask;
  std::string timestamp;  // set by the store when empty
};

struct Reader {
  std::string reader_id;
  std::string token;
  std::vector<std::string> order;
};

struct StudySetup {
  std::string study_id = "study";
  std::vector<StudySubject> subjects;
  std::vector<std::string> reader_ids{"R1", "R2", "R3"};
  std::uint64_t seed = 0;
};

struct Progress {
  std::size_t done = 0;
  std::size_t total = 0;
};

class StudyStore {
 public:
  /// Writes a new store; throws DataError when the file already exists.
  static std::unique_ptr<StudyStore> create(const fs::path& path, const StudySetup& setup);
  /// Replays an existing store. A torn final line is removed from the file.
  static std::unique_ptr<StudyStore> open(const fs::path& path);

  ~StudyStore();
  StudyStore(const StudyStore&) = delete;
  StudyStore& operator=(const StudyStore&) = delete;

  /// Validates and durably appends. Throws AnnotationError or ConflictError.
  void record_annotation(Annotation ann);

  const fs::path& path() const { return path_; }
  std::string study_id() const;
  std::vector<StudySubject> subjects() const;
  std::vector<PresentationItem> items() const;
  std::optional<PresentationItem> item(const std::string& item_id) const;
  std::vector<Reader> readers() const;
  std::optional<Reader> reader_by_token(const std::string& token) const;
  std::optional<Annotation> annotation(const std::string& reader_id, const std::string& item_id) const;
  /// In append order.
  std::vector<Annotation> annotations() const;
  /// First item in the reader's order without an annotation.
  std::optional<PresentationItem> next_item(const std::string& reader_id) const;
  Progress progress(const std::string& reader_id) const;
  /// Resolves an item's image reference against the store directory.
  fs::path image_path(const PresentationItem& item) const;

 private:
  explicit StudyStore(fs::path path);
  void apply(const nlohmann::json& rec, bool replay);
  void append_line(const std::string& line);
  void validate_annotation(const Annotation& ann) const;

  fs::path path_;
  std::FILE* file_ = nullptr;
  mutable std::shared_mutex mutex_;
  std::string study_id_;
  std::vector<std::string> subject_order_;
  std::map<std::string, StudySubject> subjects_;
  std::vector<std::string> item_order_;
  std::map<std::string, PresentationItem> items_;
  std::vector<Reader> readers_;
  std::vector<Annotation> annotations_;
  std::map<std::pair<std::string, std::string>, std::size_t> annotation_index_;
};

nlohmann::json annotation_to_json(const Annotation& a);
Annotation annotation_from_json(const nlohmann::json& j);

enum class ClusterBy { Subject, Reader };

struct AnalyzeOptions {
  bool allow_partial = false;
  ClusterBy cluster_by = ClusterBy::Subject;
};

struct Measure {
  std::string name;
  stats::MeanCi value;
};

struct CellReport {
  int views = 0;
  ImageVariant variant = ImageVariant::Sparse;
  std::size_t n = 0;
  std::vector<Measure> measures;  // quality, confidence, artifacts, dsc
  metrics::ConfusionCounts confusion;
  metrics::DiagnosticStats diagnostics;
};

struct TestReport {
  int views = 0;
  std::string measure;
  std::size_t n_pairs = 0;
  double mean_difference = 0;  // processed - sparse
  std::optional<stats::WilcoxonResult> result;
};

struct StudyReport {
  std::string study_id;
  bool partial = false;
  std::size_t n_readers = 0, n_subjects = 0, n_annotations = 0;
  std::vector<CellReport> cells;
  std::vector<TestReport> tests;

  nlohmann::json to_json() const;
  /// Writes report.json, means.csv, diagnostics.csv, tests.csv and summary.txt.
  void write(const fs::path& dir) const;
};

inline const std::array<const char*, 4> kMeasures{"quality", "confidence", "artifacts", "dsc"};

/// Throws DataError on an empty store or, unless allow_partial, on missing reads.
StudyReport analyze(const StudyStore& store, const AnalyzeOptions& opts = {});

}  // namespace sct::study
