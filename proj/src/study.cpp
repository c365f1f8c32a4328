#include "sct/study.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "sct/io.hpp"
#include "sct/rng.hpp"

namespace sct::study {

using nlohmann::json;

std::string to_string(ImageVariant v) { return v == ImageVariant::Sparse ? "sparse" : "processed"; }

ImageVariant image_variant_from_string(const std::string& s) {
  if (s == "sparse") return ImageVariant::Sparse;
  if (s == "processed") return ImageVariant::Processed;
  throw DataError("unknown image variant '" + s + "'");
}

namespace {

std::string hex128(std::uint64_t hi, std::uint64_t lo) {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json record(const char* type) { return {{"type", type}, {"schema", kSchemaVersion}}; }

}  // namespace

std::vector<PresentationItem> build_presentation_set(const std::vector<StudySubject>& subjects, std::uint64_t seed) {
  if (subjects.empty()) throw DataError("presentation set needs at least one subject");
  Rng rng(derive_seed(seed, 0x17E3));
  std::set<std::string> seen;
  std::vector<PresentationItem> items;
  for (const auto& s : subjects) {
    if (!seen.insert(s.subject_id).second) throw DataError("duplicate subject id '" + s.subject_id + "'");
    for (int views : kStudyViews)
      for (ImageVariant v : {ImageVariant::Sparse, ImageVariant::Processed}) {
        const auto it = s.images.find({views, v});
        if (it == s.images.end() || it->second.empty())
          throw DataError("subject " + s.subject_id + " has no " + to_string(v) + " rendition at " +
                          std::to_string(views) + " views");
        PresentationItem item;
        const std::uint64_t hi = rng.next_u64();
        item.item_id = hex128(hi, rng.next_u64());
        item.subject_id = s.subject_id;
        item.views = views;
        item.variant = v;
        item.image = it->second;
        items.push_back(std::move(item));
      }
  }
  return items;
}

std::vector<std::string> presentation_order(const std::vector<PresentationItem>& items, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& it : items) ids.push_back(it.item_id);
  Rng rng(derive_seed(seed, 0x0DE5));
  rng.shuffle(std::span<std::string>(ids));
  return ids;
}

std::string random_token() {
  std::random_device rd;
  auto word = [&] { return (static_cast<std::uint64_t>(rd()) << 32) ^ rd(); };
  const std::uint64_t hi = word();
  return hex128(hi, word());
}

json annotation_to_json(const Annotation& a) {
  json j = record("annotation");
  j["reader_id"] = a.reader_id;
  j["item_id"] = a.item_id;
  j["quality"] = a.quality;
  j["confidence"] = a.confidence;
  j["artifacts"] = a.artifacts;
  j["mask"] = io::mask_to_json(a.mask);
  j["timestamp"] = a.timestamp;
  return j;
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.reader_id = j.at("reader_id").get<std::string>();
  a.item_id = j.at("item_id").get<std::string>();
  a.quality = j.at("quality").get<int>();
  a.confidence = j.at("confidence").get<int>();
  a.artifacts = j.at("artifacts").get<int>();
  a.mask = io::mask_from_json(j.at("mask"));
  a.timestamp = j.value("timestamp", "");
  return a;
}

StudyStore::StudyStore(fs::path path) : path_(std::move(path)) {}

StudyStore::~StudyStore() {
  if (file_) std::fclose(file_);
}

void StudyStore::append_line(const std::string& line) {
  if (!file_) {
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw DataError("cannot open study store " + path_.string() + " for appending");
  }
  const std::string text = line + "\n";
  if (std::fwrite(text.data(), 1, text.size(), file_) != text.size() || std::fflush(file_) != 0 ||
      ::fsync(::fileno(file_)) != 0)
    throw DataError("failed to append to study store " + path_.string());
}

std::unique_ptr<StudyStore> StudyStore::create(const fs::path& path, const StudySetup& setup) {
  if (fs::exists(path)) throw DataError("study store " + path.string() + " already exists");
  if (setup.reader_ids.empty()) throw DataError("a study needs at least one reader");
  std::set<std::string> reader_set(setup.reader_ids.begin(), setup.reader_ids.end());
  if (reader_set.size() != setup.reader_ids.size()) throw DataError("duplicate reader ids");
  const auto items = build_presentation_set(setup.subjects, setup.seed);

  std::vector<json> recs;
  json head = record("study");
  head["study_id"] = setup.study_id;
  head["seed"] = setup.seed;
  head["views"] = kStudyViews;
  recs.push_back(head);
  for (const auto& s : setup.subjects) {
    json r = record("subject");
    r["subject_id"] = s.subject_id;
    r["diseased"] = s.diseased;
    r["truth"] = io::mask_to_json(s.truth);
    recs.push_back(r);
  }
  for (const auto& it : items) {
    json r = record("item");
    r["item_id"] = it.item_id;
    r["subject_id"] = it.subject_id;
    r["views"] = it.views;
    r["variant"] = to_string(it.variant);
    r["image"] = it.image;
    recs.push_back(r);
  }
  for (std::size_t i = 0; i < setup.reader_ids.size(); ++i) {
    json r = record("reader");
    r["reader_id"] = setup.reader_ids[i];
    r["token"] = random_token();
    r["order"] = presentation_order(items, derive_seed(setup.seed, 100 + i));
    recs.push_back(r);
  }
  std::string text;
  for (const auto& r : recs) text += r.dump() + "\n";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, text);
  return open(path);
}

std::unique_ptr<StudyStore> StudyStore::open(const fs::path& path) {
  const std::string text = io::read_text(path);
  std::unique_ptr<StudyStore> store(new StudyStore(path));
  std::size_t pos = 0, line_no = 0, good_end = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // torn tail, no newline written
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) {
      good_end = pos;
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      if (pos >= text.size()) break;  // torn final record
      throw DataError("study store " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      store->apply(rec, true);
    } catch (const json::exception& e) {
      throw DataError("study store " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("study store " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConflictError& e) {
      throw DataError("study store " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    good_end = pos;
  }
  if (good_end < text.size()) {
    // Drop the torn tail so later appends start on a fresh line.
    fs::resize_file(path, good_end);
  }
  if (store->study_id_.empty()) throw DataError("study store " + path.string() + " has no study record");
  return store;
}

void StudyStore::apply(const json& rec, bool replay) {
  const std::string type = rec.at("type").get<std::string>();
  const int schema = rec.at("schema").get<int>();
  if (schema != kSchemaVersion) throw DataError("unsupported record schema " + std::to_string(schema));
  if (type == "study") {
    study_id_ = rec.at("study_id").get<std::string>();
  } else if (type == "subject") {
    StudySubject s;
    s.subject_id = rec.at("subject_id").get<std::string>();
    s.diseased = rec.at("diseased").get<bool>();
    s.truth = io::mask_from_json(rec.at("truth"));
    if (subjects_.count(s.subject_id)) throw DataError("duplicate subject " + s.subject_id);
    subject_order_.push_back(s.subject_id);
    subjects_[s.subject_id] = std::move(s);
  } else if (type == "item") {
    PresentationItem it;
    it.item_id = rec.at("item_id").get<std::string>();
    it.subject_id = rec.at("subject_id").get<std::string>();
    it.views = rec.at("views").get<int>();
    it.variant = image_variant_from_string(rec.at("variant").get<std::string>());
    it.image = rec.at("image").get<std::string>();
    auto s = subjects_.find(it.subject_id);
    if (s == subjects_.end()) throw DataError("item references unknown subject " + it.subject_id);
    s->second.images[{it.views, it.variant}] = it.image;
    item_order_.push_back(it.item_id);
    items_[it.item_id] = std::move(it);
  } else if (type == "reader") {
    Reader r;
    r.reader_id = rec.at("reader_id").get<std::string>();
    r.token = rec.at("token").get<std::string>();
    r.order = rec.at("order").get<std::vector<std::string>>();
    for (const auto& id : r.order)
      if (!items_.count(id)) throw DataError("reader order references unknown item " + id);
    readers_.push_back(std::move(r));
  } else if (type == "annotation") {
    Annotation a = annotation_from_json(rec);
    if (replay) validate_annotation(a);
    annotation_index_[{a.reader_id, a.item_id}] = annotations_.size();
    annotations_.push_back(std::move(a));
  } else {
    throw DataError("unknown record type '" + type + "'");
  }
}

void StudyStore::validate_annotation(const Annotation& a) const {
  auto range = [](const char* name, int v, int hi) {
    if (v < kMinScore || v > hi)
      throw AnnotationError(std::string(name) + "_out_of_range",
                            std::string(name) + " score " + std::to_string(v) + " outside [1, " + std::to_string(hi) + "]");
  };
  range("quality", a.quality, kMaxQuality);
  range("confidence", a.confidence, kMaxConfidence);
  range("artifacts", a.artifacts, kMaxArtifacts);
  const auto reader = std::find_if(readers_.begin(), readers_.end(), [&](const Reader& r) { return r.reader_id == a.reader_id; });
  if (reader == readers_.end()) throw AnnotationError("unknown_reader", "unknown reader '" + a.reader_id + "'");
  const auto item = items_.find(a.item_id);
  if (item == items_.end() || std::find(reader->order.begin(), reader->order.end(), a.item_id) == reader->order.end())
    throw AnnotationError("unknown_item", "unknown item '" + a.item_id + "'");
  const auto& truth = subjects_.at(item->second.subject_id).truth;
  if (!a.mask.same_shape(truth) || a.mask.bits.size() != truth.bits.size())
    throw AnnotationError("mask_shape", "mask is " + std::to_string(a.mask.width) + "x" + std::to_string(a.mask.height) +
                                            ", image is " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
  if (annotation_index_.count({a.reader_id, a.item_id}))
    throw ConflictError("reader " + a.reader_id + " already annotated item " + a.item_id);
}

void StudyStore::record_annotation(Annotation ann) {
  std::unique_lock lock(mutex_);
  validate_annotation(ann);
  if (ann.timestamp.empty()) ann.timestamp = utc_now();
  append_line(annotation_to_json(ann).dump());
  annotation_index_[{ann.reader_id, ann.item_id}] = annotations_.size();
  annotations_.push_back(std::move(ann));
}

std::string StudyStore::study_id() const {
  std::shared_lock lock(mutex_);
  return study_id_;
}

std::vector<StudySubject> StudyStore::subjects() const {
  std::shared_lock lock(mutex_);
  std::vector<StudySubject> out;
  for (const auto& id : subject_order_) out.push_back(subjects_.at(id));
  return out;
}

std::vector<PresentationItem> StudyStore::items() const {
  std::shared_lock lock(mutex_);
  std::vector<PresentationItem> out;
  for (const auto& id : item_order_) out.push_back(items_.at(id));
  return out;
}

std::optional<PresentationItem> StudyStore::item(const std::string& item_id) const {
  std::shared_lock lock(mutex_);
  const auto it = items_.find(item_id);
  if (it == items_.end()) return std::nullopt;
  return it->second;
}

std::vector<Reader> StudyStore::readers() const {
  std::shared_lock lock(mutex_);
  return readers_;
}

std::optional<Reader> StudyStore::reader_by_token(const std::string& token) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : readers_) {
    // Constant-time comparison over equal-length tokens.
    if (r.token.size() != token.size()) continue;
    unsigned diff = 0;
    for (std::size_t i = 0; i < token.size(); ++i) diff |= static_cast<unsigned char>(r.token[i] ^ token[i]);
    if (diff == 0) return r;
  }
  return std::nullopt;
}

std::optional<Annotation> StudyStore::annotation(const std::string& reader_id, const std::string& item_id) const {
  std::shared_lock lock(mutex_);
  const auto it = annotation_index_.find({reader_id, item_id});
  if (it == annotation_index_.end()) return std::nullopt;
  return annotations_[it->second];
}

std::vector<Annotation> StudyStore::annotations() const {
  std::shared_lock lock(mutex_);
  return annotations_;
}

std::optional<PresentationItem> StudyStore::next_item(const std::string& reader_id) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : readers_) {
    if (r.reader_id != reader_id) continue;
    for (const auto& id : r.order)
      if (!annotation_index_.count({reader_id, id})) return items_.at(id);
    return std::nullopt;
  }
  throw DataError("unknown reader '" + reader_id + "'");
}

Progress StudyStore::progress(const std::string& reader_id) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : readers_) {
    if (r.reader_id != reader_id) continue;
    Progress p;
    p.total = r.order.size();
    for (const auto& id : r.order) p.done += annotation_index_.count({reader_id, id});
    return p;
  }
  throw DataError("unknown reader '" + reader_id + "'");
}

fs::path StudyStore::image_path(const PresentationItem& item) const {
  const fs::path p(item.image);
  return p.is_absolute() ? p : path_.parent_path() / p;
}

// ---------------------------------------------------------------------------
// Analysis

namespace {

double measure_value(const Annotation& a, int m, const StudySubject& s) {
  switch (m) {
    case 0: return a.quality;
    case 1: return a.confidence;
    case 2: return a.artifacts;
    default: return metrics::dice(a.mask, s.truth);
  }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

StudyReport analyze(const StudyStore& store, const AnalyzeOptions& opts) {
  const auto subjects = store.subjects();
  const auto items = store.items();
  const auto readers = store.readers();
  const auto anns = store.annotations();
  if (anns.empty()) throw DataError("study store has no annotations");

  std::map<std::string, StudySubject> subject_by_id;
  for (const auto& s : subjects) subject_by_id[s.subject_id] = s;
  std::map<std::string, PresentationItem> item_by_id;
  for (const auto& it : items) item_by_id[it.item_id] = it;

  // (reader, subject, views, variant) -> annotation
  using Key = std::tuple<std::string, std::string, int, ImageVariant>;
  std::map<Key, const Annotation*> index;
  for (const auto& a : anns) {
    const auto& it = item_by_id.at(a.item_id);
    index[{a.reader_id, it.subject_id, it.views, it.variant}] = &a;
  }
  const std::size_t expected = readers.size() * items.size();
  StudyReport rep;
  rep.study_id = store.study_id();
  rep.n_readers = readers.size();
  rep.n_subjects = subjects.size();
  rep.n_annotations = anns.size();
  rep.partial = anns.size() < expected;
  if (rep.partial && !opts.allow_partial)
    throw DataError("study incomplete: " + std::to_string(anns.size()) + " of " + std::to_string(expected) +
                    " reads present (use the partial-report option to analyze anyway)");

  for (int views : kStudyViews)
    for (ImageVariant v : {ImageVariant::Sparse, ImageVariant::Processed}) {
      CellReport cell;
      cell.views = views;
      cell.variant = v;
      std::array<std::vector<double>, 4> values;
      for (const auto& r : readers)
        for (const auto& s : subjects) {
          const auto f = index.find({r.reader_id, s.subject_id, views, v});
          if (f == index.end()) continue;
          const Annotation& a = *f->second;
          ++cell.n;
          for (int m = 0; m < 3; ++m) values[m].push_back(measure_value(a, m, s));
          if (s.diseased) values[3].push_back(measure_value(a, 3, s));
          cell.confusion.add(metrics::classify_annotation(a.mask, s.truth, s.diseased));
        }
      for (int m = 0; m < 4; ++m) {
        Measure meas;
        meas.name = kMeasures[m];
        if (!values[m].empty()) meas.value = stats::mean_ci(values[m]);
        cell.measures.push_back(meas);
      }
      cell.diagnostics = metrics::diagnostic_stats(cell.confusion);
      rep.cells.push_back(std::move(cell));
    }

  for (int views : kStudyViews)
    for (int m = 0; m < 4; ++m) {
      TestReport t;
      t.views = views;
      t.measure = kMeasures[m];
      std::vector<stats::PairedSample> samples;
      double gap = 0;
      for (const auto& r : readers)
        for (const auto& s : subjects) {
          if (m == 3 && !s.diseased) continue;
          const auto fp = index.find({r.reader_id, s.subject_id, views, ImageVariant::Processed});
          const auto fs_ = index.find({r.reader_id, s.subject_id, views, ImageVariant::Sparse});
          if (fp == index.end() || fs_ == index.end()) continue;
          stats::PairedSample ps;
          ps.cluster_id = opts.cluster_by == ClusterBy::Subject ? s.subject_id : r.reader_id;
          ps.processed = measure_value(*fp->second, m, s);
          ps.sparse = measure_value(*fs_->second, m, s);
          gap += ps.processed - ps.sparse;
          samples.push_back(ps);
        }
      t.n_pairs = samples.size();
      if (!samples.empty()) {
        t.mean_difference = gap / static_cast<double>(samples.size());
        t.result = stats::clustered_wilcoxon(samples);
      }
      rep.tests.push_back(std::move(t));
    }
  return rep;
}

json StudyReport::to_json() const {
  json cj = json::array();
  for (const auto& c : cells) {
    json mj = json::object();
    for (const auto& m : c.measures)
      mj[m.name] = {{"mean", m.value.n ? json(m.value.mean) : json(nullptr)},
                    {"ci_low", optional_json(m.value.low)},
                    {"ci_high", optional_json(m.value.high)},
                    {"n", m.value.n}};
    cj.push_back({{"views", c.views},
                  {"variant", to_string(c.variant)},
                  {"n", c.n},
                  {"measures", mj},
                  {"confusion", {{"tp", c.confusion.tp}, {"fp", c.confusion.fp}, {"tn", c.confusion.tn}, {"fn", c.confusion.fn}}},
                  {"sensitivity", optional_json(c.diagnostics.sensitivity)},
                  {"specificity", optional_json(c.diagnostics.specificity)},
                  {"f1", optional_json(c.diagnostics.f1)},
                  {"npv", optional_json(c.diagnostics.npv)}});
  }
  json tj = json::array();
  for (const auto& t : tests) {
    json r = {{"views", t.views}, {"measure", t.measure}, {"n_pairs", t.n_pairs}, {"mean_difference", t.mean_difference}};
    if (t.result) {
      r["p_value"] = t.result->p_value;
      r["z"] = t.result->z;
      r["statistic"] = t.result->statistic;
      r["n_clusters"] = t.result->n_clusters;
    } else {
      r["p_value"] = nullptr;
    }
    tj.push_back(r);
  }
  return {{"study_id", study_id}, {"partial", partial},   {"n_readers", n_readers}, {"n_subjects", n_subjects},
          {"n_annotations", n_annotations}, {"cells", cj}, {"tests", tj}};
}

void StudyReport::write(const fs::path& dir) const {
  fs::create_directories(dir);
  io::write_json(dir / "report.json", to_json());

  std::ostringstream means, diag, tcsv, summary;
  means << "views,variant,metric,mean,ci_low,ci_high,n\n";
  diag << "views,variant,tp,fp,tn,fn,sensitivity,specificity,f1,npv\n";
  for (const auto& c : cells) {
    for (const auto& m : c.measures)
      means << c.views << ',' << to_string(c.variant) << ',' << m.name << ','
            << (m.value.n ? csv_number(m.value.mean) : "") << ',' << csv_number(m.value.low) << ','
            << csv_number(m.value.high) << ',' << m.value.n << '\n';
    diag << c.views << ',' << to_string(c.variant) << ',' << c.confusion.tp << ',' << c.confusion.fp << ','
         << c.confusion.tn << ',' << c.confusion.fn << ',' << csv_number(c.diagnostics.sensitivity) << ','
         << csv_number(c.diagnostics.specificity) << ',' << csv_number(c.diagnostics.f1) << ','
         << csv_number(c.diagnostics.npv) << '\n';
  }
  tcsv << "views,measure,n_pairs,mean_difference,p_value\n";
  for (const auto& t : tests)
    tcsv << t.views << ',' << t.measure << ',' << t.n_pairs << ',' << csv_number(t.mean_difference) << ','
         << (t.result ? csv_number(t.result->p_value) : "") << '\n';

  summary << "Study " << study_id << (partial ? " (partial)" : "") << ": " << n_readers << " readers, " << n_subjects
          << " subjects, " << n_annotations << " reads\n\n";
  char line[256];
  for (const auto& c : cells) {
    std::snprintf(line, sizeof line, "%4d views %-9s n=%-3zu", c.views, to_string(c.variant).c_str(), c.n);
    summary << line;
    for (const auto& m : c.measures) {
      std::snprintf(line, sizeof line, "  %s %.2f", m.name.c_str(), m.value.mean);
      summary << line;
    }
    summary << "  TP/FP/TN/FN " << c.confusion.tp << '/' << c.confusion.fp << '/' << c.confusion.tn << '/'
            << c.confusion.fn << "  sens " << (c.diagnostics.sensitivity ? csv_number(c.diagnostics.sensitivity) : "n/a")
            << "  spec " << (c.diagnostics.specificity ? csv_number(c.diagnostics.specificity) : "n/a") << '\n';
  }
  summary << "\nProcessed vs sparse (clustered signed-rank p):\n";
  for (const auto& t : tests) {
    std::snprintf(line, sizeof line, "%4d views %-10s diff %+.3f  p = %s\n", t.views, t.measure.c_str(),
                  t.mean_difference, t.result ? csv_number(t.result->p_value).c_str() : "undefined");
    summary << line;
  }
  io::write_text(dir / "means.csv", means.str());
  io::write_text(dir / "diagnostics.csv", diag.str());
  io::write_text(dir / "tests.csv", tcsv.str());
  io::write_text(dir / "summary.txt", summary.str());
}

}  // namespace sct::study
