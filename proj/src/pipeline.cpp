#include "sct/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <pthread.h>
#include <set>
#include <sstream>
#include <thread>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/metrics.hpp"
#include "sct/nn/checkpoint.hpp"
#include "sct/rng.hpp"
#include "sct/stats.hpp"

namespace sct::pipeline {

using nlohmann::json;

namespace {

constexpr float kHuOffset = 1000.0f;

std::vector<int> int_list(const json& j, const char* what) {
  if (!j.is_array()) throw UsageError(std::string(what) + " must be a list of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw UsageError(std::string(what) + " must be a list of integers");
    out.push_back(v.get<int>());
  }
  return out;
}

std::string slice_id_for(const std::string& slice_path) {
  fs::path p(slice_path);
  return (p.parent_path() / p.stem()).generic_string();
}

std::string level_name(int views, const char* kind) { return "v" + std::to_string(views) + "_" + kind + ".raw"; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// Runs body(i) for i in [0, n) on a small pool; the first exception wins.
template <class F>
void parallel_for(std::size_t n, F body) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ImageGrid to_display(ImageGrid offset_hu) {
  for (auto& v : offset_hu.values) v -= kHuOffset;
  return tomo::apply_window(offset_hu, tomo::kLungWindow);
}

ImageGrid load_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing input " + path.string());
  return path.extension() == ".png" ? io::read_png16(path) : io::read_raw_image(path);
}

fs::path processed_path(const PipelineConfig& cfg, const std::string& slice_id, int views) {
  return cfg.infer_dir() / slice_id / level_name(views, "processed");
}

void write_metric_rows(const fs::path& dir, const std::vector<ImageMetrics>& rows) {
  std::ostringstream per;
  per << "slice_id,views,variant,mse,ssim\n";
  for (const auto& r : rows) per << r.slice_id << ',' << r.views << ',' << r.variant << ',' << fmt(r.mse) << ',' << fmt(r.ssim) << '\n';
  io::write_text(dir / "per_image.csv", per.str());

  std::map<std::pair<int, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.views, r.variant}];
    g.first.push_back(r.mse);
    g.second.push_back(r.ssim);
  }
  std::ostringstream summary;
  summary << "views,variant,metric,mean,ci_low,ci_high,n\n";
  json sj = json::array();
  for (const auto& [key, g] : groups) {
    json row = {{"views", key.first}, {"variant", key.second}};
    for (const auto& [name, values] : {std::pair{"mse", &g.first}, std::pair{"ssim", &g.second}}) {
      const auto ci = stats::mean_ci(*values);
      summary << key.first << ',' << key.second << ',' << name << ',' << fmt(ci.mean) << ',' << fmt(ci.low) << ','
              << fmt(ci.high) << ',' << ci.n << '\n';
      row[name] = {{"mean", ci.mean},
                   {"ci_low", ci.low ? json(*ci.low) : json(nullptr)},
                   {"ci_high", ci.high ? json(*ci.high) : json(nullptr)},
                   {"n", ci.n}};
    }
    sj.push_back(row);
  }
  io::write_text(dir / "metrics.csv", summary.str());
  io::write_json(dir / "summary.json", sj);
}

std::string json_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "";
  return fmt(j[key].get<double>());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  if (work_dir.empty()) throw UsageError("paths.work is empty");
  if (full_views <= 0) throw UsageError("simulation.full_views must be positive");
  if (levels.empty()) throw UsageError("simulation.levels is empty");
  for (int v : levels)
    if (v <= 0 || v > full_views || full_views % v != 0)
      throw UsageError("view level " + std::to_string(v) + " does not divide " + std::to_string(full_views));
  for (int v : train_views)
    if (std::find(levels.begin(), levels.end(), v) == levels.end() || v == full_views)
      throw UsageError("training view level " + std::to_string(v) + " is not a sparse simulation level");
  if (network.input_size != dataset.base.size)
    throw UsageError("network.input_size must equal dataset.base.size");
  network.validate();
  training.validate();
  if (reader_ids.empty()) throw UsageError("study.readers is empty");
}

json PipelineConfig::to_json() const {
  json t = training.to_json();
  t["views"] = train_views;
  return {{"paths", {{"work", work_dir.string()}}},
          {"dataset", dataset.to_json()},
          {"simulation", {{"full_views", full_views}, {"levels", levels}, {"filter", tomo::to_string(filter)}}},
          {"network", network.to_json()},
          {"training", t},
          {"seeds", {{"phantom", seeds.phantom}, {"train", seeds.train}, {"study", seeds.study}}},
          {"study",
           {{"id", study_id},
            {"readers", reader_ids},
            {"allow_partial", analyze.allow_partial},
            {"cluster_by", analyze.cluster_by == study::ClusterBy::Subject ? "subject" : "reader"}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  PipelineConfig c;
  try {
    if (j.contains("paths")) c.work_dir = j["paths"].value("work", c.work_dir.string());
    if (j.contains("dataset")) c.dataset = phantom::DatasetSpec::from_json(j["dataset"]);
    if (j.contains("simulation")) {
      const auto& s = j["simulation"];
      c.full_views = s.value("full_views", c.full_views);
      if (s.contains("levels")) c.levels = int_list(s["levels"], "simulation.levels");
      if (s.contains("filter")) c.filter = tomo::filter_from_string(s["filter"].get<std::string>());
    }
    if (j.contains("network")) c.network = nn::UNetConfig::from_json(j["network"]);
    else c.network.input_size = c.dataset.base.size;
    if (j.contains("training")) {
      c.training = nn::TrainConfig::from_json(j["training"]);
      if (j["training"].contains("views")) {
        const auto& v = j["training"]["views"];
        c.train_views = v.is_array() ? int_list(v, "training.views") : std::vector<int>{v.get<int>()};
      }
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.seeds.phantom = s.value("phantom", c.seeds.phantom);
      c.seeds.train = s.value("train", c.seeds.train);
      c.seeds.study = s.value("study", c.seeds.study);
    }
    if (j.contains("study")) {
      const auto& s = j["study"];
      c.study_id = s.value("id", c.study_id);
      if (s.contains("readers")) c.reader_ids = s["readers"].get<std::vector<std::string>>();
      c.analyze.allow_partial = s.value("allow_partial", false);
      const std::string by = s.value("cluster_by", std::string("subject"));
      if (by == "subject") c.analyze.cluster_by = study::ClusterBy::Subject;
      else if (by == "reader") c.analyze.cluster_by = study::ClusterBy::Reader;
      else throw UsageError("study.cluster_by must be subject or reader");
    }
    if (j.contains("service")) c.service = service::ServiceConfig::from_json(j["service"]);
    if (c.service.store_path.empty()) c.service.store_path = c.study_dir() / "store.jsonl";
    if (j.contains("evaluate")) {
      const auto& e = j["evaluate"];
      if (e.contains("reference_dir")) c.evaluate_reference = e["reference_dir"].get<std::string>();
      if (e.contains("candidate_dir")) c.evaluate_candidate = e["candidate_dir"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed configuration: ") + e.what());
  } catch (const DataError& e) {
    throw UsageError(std::string("malformed configuration: ") + e.what());
  }
  // Stage seeds are authoritative over seeds embedded in sub-sections.
  c.dataset.seed = c.seeds.phantom;
  c.training.seed = c.seeds.train;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Locking

DirLock::DirLock(const fs::path& dir) {
  fs::create_directories(dir);
  const auto path = dir / ".lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DataError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw DataError("output directory " + dir.string() + " is locked by another process");
  }
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

// ---------------------------------------------------------------------------
// Simulation manifest

json SimManifest::to_json() const {
  json ej = json::array();
  for (const auto& e : entries) {
    json lv = json::object();
    for (const auto& [views, l] : e.levels) lv[std::to_string(views)] = {{"sparse", l.sparse}, {"residual", l.residual}};
    json item = {{"slice_id", e.slice_id}, {"subject_id", e.subject_id}, {"split", e.split},
                 {"diseased", e.diseased}, {"full", e.full},             {"levels", lv}};
    if (e.mask) item["mask"] = *e.mask;
    ej.push_back(item);
  }
  return {{"full_views", full_views}, {"levels", levels}, {"entries", ej}};
}

SimManifest SimManifest::from_json(const json& j) {
  SimManifest m;
  try {
    m.full_views = j.at("full_views").get<int>();
    m.levels = j.at("levels").get<std::vector<int>>();
    for (const auto& item : j.at("entries")) {
      SimEntry e;
      e.slice_id = item.at("slice_id").get<std::string>();
      e.subject_id = item.at("subject_id").get<std::string>();
      e.split = item.at("split").get<std::string>();
      e.diseased = item.at("diseased").get<bool>();
      e.full = item.at("full").get<std::string>();
      if (item.contains("mask")) e.mask = item["mask"].get<std::string>();
      for (const auto& [k, v] : item.at("levels").items())
        e.levels[std::stoi(k)] = {v.at("sparse").get<std::string>(), v.at("residual").get<std::string>()};
      m.entries.push_back(std::move(e));
    }
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed simulation manifest: ") + e.what());
  }
  return m;
}

SimManifest read_sim_manifest(const fs::path& sim_dir) {
  const auto path = sim_dir / "manifest.json";
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run simulate first)");
  return SimManifest::from_json(io::read_json(path));
}

// ---------------------------------------------------------------------------
// Stages

std::vector<phantom::ManifestEntry> run_phantom(const PipelineConfig& cfg) {
  DirLock lock(cfg.dataset_dir());
  return phantom::build_dataset(cfg.dataset, cfg.dataset_dir());
}

SimManifest run_simulate(const PipelineConfig& cfg) {
  const auto in = phantom::read_manifest(cfg.dataset_dir() / "manifest.json");
  DirLock lock(cfg.sim_dir());
  SimManifest m;
  m.full_views = cfg.full_views;
  for (int v : cfg.levels)
    if (v != cfg.full_views) m.levels.push_back(v);
  m.entries.resize(in.size());

  parallel_for(in.size(), [&](std::size_t i) {
    const auto& src = in[i];
    const auto slice = phantom::load_raw_slice(cfg.dataset_dir() / src.slice_path);
    SimEntry& e = m.entries[i];
    e.slice_id = slice_id_for(src.slice_path);
    e.subject_id = src.subject_id;
    e.split = src.split;
    e.diseased = src.diseased;
    const fs::path out = cfg.sim_dir() / e.slice_id;

    // Attenuation must be non-negative, so air maps to zero before projecting.
    ImageGrid shifted = slice.image;
    for (auto& v : shifted.values) v += kHuOffset;
    const int size = shifted.width;
    const auto geometry = tomo::ProjectionGeometry::parallel(cfg.full_views, size, shifted.pixel_size);
    const auto sino = tomo::forward_project(shifted, geometry);
    ImageGrid full = to_display(tomo::fbp_reconstruct(sino, size, cfg.filter));
    full.pixel_size = shifted.pixel_size;
    for (auto& v : full.values) v = nn::quantize_unit(v);

    e.full = e.slice_id + "/full.raw";
    io::write_raw_image(cfg.sim_dir() / e.full, full);
    if (slice.diseased()) {
      e.mask = e.slice_id + "/mask.json";
      io::write_mask(cfg.sim_dir() / *e.mask, slice.nodule_mask);
    }
    for (int views : m.levels) {
      ImageGrid sparse = to_display(tomo::fbp_reconstruct(tomo::subsample_sinogram(sino, views), size, cfg.filter));
      sparse.pixel_size = shifted.pixel_size;
      const auto pair = nn::make_residual_pair(sparse, full, views, e.slice_id);
      SimLevel lv{e.slice_id + "/" + level_name(views, "sparse"), e.slice_id + "/" + level_name(views, "residual")};
      io::write_raw_image(out / level_name(views, "sparse"), pair.input);
      io::write_raw_image(out / level_name(views, "residual"), pair.label);
      e.levels[views] = lv;
    }
  });
  io::write_json(cfg.sim_dir() / "manifest.json", m.to_json());
  return m;
}

namespace {

std::vector<nn::ResidualPair> load_pairs(const PipelineConfig& cfg, const SimManifest& m, const std::string& split, int views) {
  std::vector<nn::ResidualPair> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    const auto it = e.levels.find(views);
    if (it == e.levels.end()) throw DataError("slice " + e.slice_id + " has no " + std::to_string(views) + "-view image");
    nn::ResidualPair p;
    p.input = io::read_raw_image(cfg.sim_dir() / it->second.sparse);
    p.label = io::read_raw_image(cfg.sim_dir() / it->second.residual);
    p.views = views;
    p.id = e.slice_id;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::vector<int> run_train(const PipelineConfig& cfg) {
  const auto m = read_sim_manifest(cfg.sim_dir());
  std::vector<int> trained;
  for (int views : cfg.train_views) {
    const auto train_set = load_pairs(cfg, m, "train", views);
    const auto val_set = load_pairs(cfg, m, "val", views);
    const fs::path dir = cfg.model_dir(views);
    DirLock lock(dir);
    nn::TrainConfig tcfg = cfg.training;
    tcfg.seed = derive_seed(cfg.seeds.train, static_cast<std::uint64_t>(views));
    nn::TrainHooks hooks;
    hooks.on_epoch = [views](const nn::EpochRecord& r) {
      std::fprintf(stderr, "[train v%d] epoch %d  train %.6g  val %.6g  lr %.3g\n", views, r.epoch, r.train_loss,
                   r.val_loss, r.lr);
    };
    const auto result = nn::train(train_set, val_set, tcfg, cfg.network, hooks);
    nn::CheckpointMeta meta;
    meta.epoch = result.best_epoch;
    meta.val_loss = result.best_val_loss;
    meta.views = views;
    meta.extra = {{"training", tcfg.to_json()}, {"stopped_early", result.stopped_early}};
    nn::save_checkpoint(dir / "checkpoint.bin", result.best, meta);
    nn::write_history_csv(dir / "history.csv", result.history);
    trained.push_back(views);
  }
  return trained;
}

void run_infer(const PipelineConfig& cfg) {
  const auto m = read_sim_manifest(cfg.sim_dir());
  DirLock lock(cfg.infer_dir());
  for (int views : cfg.train_views) {
    const auto ckpt_path = cfg.model_dir(views) / "checkpoint.bin";
    if (!fs::exists(ckpt_path)) throw DataError("missing " + ckpt_path.string() + " (run train first)");
    const auto ckpt = nn::load_checkpoint(ckpt_path);
    std::vector<const SimEntry*> todo;
    for (const auto& e : m.entries)
      if (e.split == "test" || e.split == "study") todo.push_back(&e);
    parallel_for(todo.size(), [&](std::size_t i) {
      const SimEntry& e = *todo[i];
      const auto it = e.levels.find(views);
      if (it == e.levels.end()) throw DataError("slice " + e.slice_id + " has no " + std::to_string(views) + "-view image");
      const auto sparse = io::read_raw_image(cfg.sim_dir() / it->second.sparse);
      io::write_raw_image(processed_path(cfg, e.slice_id, views), nn::postprocess(sparse, ckpt.params));
    });
  }
}

std::vector<ImageMetrics> run_evaluate(const PipelineConfig& cfg) {
  std::vector<ImageMetrics> rows;
  if (cfg.evaluate_reference || cfg.evaluate_candidate) {
    if (!cfg.evaluate_reference || !cfg.evaluate_candidate)
      throw UsageError("evaluate.reference_dir and evaluate.candidate_dir must be set together");
    if (!fs::is_directory(*cfg.evaluate_candidate)) throw DataError("missing directory " + cfg.evaluate_candidate->string());
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(*cfg.evaluate_candidate)) {
      const auto ext = f.path().extension();
      if (f.is_regular_file() && (ext == ".raw" || ext == ".png")) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no images in " + cfg.evaluate_candidate->string());
    for (const auto& f : files) {
      const auto cand = load_image(f);
      const auto ref = load_image(*cfg.evaluate_reference / f.filename());
      rows.push_back({f.filename().string(), 0, "candidate", metrics::mse(cand, ref), metrics::ssim(cand, ref)});
    }
  } else {
    const auto m = read_sim_manifest(cfg.sim_dir());
    for (const auto& e : m.entries) {
      if (e.split != "test") continue;
      const auto full = io::read_raw_image(cfg.sim_dir() / e.full);
      for (const auto& [views, lv] : e.levels) {
        const auto sparse = io::read_raw_image(cfg.sim_dir() / lv.sparse);
        rows.push_back({e.slice_id, views, "sparse", metrics::mse(sparse, full), metrics::ssim(sparse, full)});
        const auto proc = processed_path(cfg, e.slice_id, views);
        if (fs::exists(proc)) {
          const auto img = io::read_raw_image(proc);
          rows.push_back({e.slice_id, views, "processed", metrics::mse(img, full), metrics::ssim(img, full)});
        }
      }
    }
    if (rows.empty()) throw DataError("the simulation has no test slices");
  }
  DirLock lock(cfg.eval_dir());
  write_metric_rows(cfg.eval_dir(), rows);
  return rows;
}

std::vector<study::Reader> run_study_init(const PipelineConfig& cfg) {
  const auto m = read_sim_manifest(cfg.sim_dir());
  const fs::path dir = cfg.study_dir();
  DirLock lock(dir);
  study::StudySetup setup;
  setup.study_id = cfg.study_id;
  setup.reader_ids = cfg.reader_ids;
  setup.seed = cfg.seeds.study;
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (e.split != "study" || !seen.insert(e.subject_id).second) continue;
    study::StudySubject s;
    s.subject_id = e.subject_id;
    s.diseased = e.diseased;
    const auto full = io::read_raw_image(cfg.sim_dir() / e.full);
    s.truth = e.mask ? io::read_mask(cfg.sim_dir() / *e.mask) : Mask(full.width, full.height);
    int n = 0;
    for (int views : study::kStudyViews) {
      const auto it = e.levels.find(views);
      const auto proc = processed_path(cfg, e.slice_id, views);
      if (it == e.levels.end()) throw DataError("study needs " + std::to_string(views) + "-view simulations");
      if (!fs::exists(proc)) throw DataError("study needs postprocessed " + std::to_string(views) + "-view images (train and infer that level)");
      // File names carry no view or variant information.
      char name[32];
      std::snprintf(name, sizeof name, "images/%s_%02d.png", s.subject_id.c_str(), n++);
      io::write_png16(dir / name, io::read_raw_image(cfg.sim_dir() / it->second.sparse));
      s.images[{views, study::ImageVariant::Sparse}] = name;
      std::snprintf(name, sizeof name, "images/%s_%02d.png", s.subject_id.c_str(), n++);
      io::write_png16(dir / name, io::read_raw_image(proc));
      s.images[{views, study::ImageVariant::Processed}] = name;
    }
    setup.subjects.push_back(std::move(s));
  }
  if (setup.subjects.empty()) throw DataError("the simulation has no study subjects");
  auto store = study::StudyStore::create(dir / "store.jsonl", setup);
  const auto readers = store->readers();
  json rj = json::array();
  for (const auto& r : readers) rj.push_back({{"reader_id", r.reader_id}, {"token", r.token}});
  const auto tokens = dir / "readers.json";
  io::write_json(tokens, rj);
  fs::permissions(tokens, fs::perms::owner_read | fs::perms::owner_write);
  return readers;
}

void run_study_serve(const PipelineConfig& cfg) {
  cfg.service.validate();
  auto store = study::StudyStore::open(cfg.service.store_path);
  service::StudyServer server(*store, cfg.service.static_dir);

  // Signals are consumed by a dedicated thread so stop() runs outside a handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  const int port = server.bind(cfg.service.host, cfg.service.port);
  std::fprintf(stderr, "serving study %s on http://%s:%d\n", store->study_id().c_str(), cfg.service.host.c_str(), port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.serve();
  // serve() may also return on its own; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

study::StudyReport run_study_analyze(const PipelineConfig& cfg) {
  auto store = study::StudyStore::open(cfg.service.store_path);
  const auto report = study::analyze(*store, cfg.analyze);
  const auto dir = cfg.study_dir() / "analysis";
  DirLock lock(dir);
  report.write(dir);
  return report;
}

void run_report(const PipelineConfig& cfg) {
  const auto eval = cfg.eval_dir() / "summary.json";
  const auto study_report = cfg.study_dir() / "analysis" / "report.json";
  if (!fs::exists(eval) && !fs::exists(study_report))
    throw DataError("nothing to report: run evaluate and/or study-analyze first");
  DirLock lock(cfg.report_dir());
  if (fs::exists(eval)) {
    std::ostringstream out;
    out << "views,variant,mse_mean,mse_ci_low,mse_ci_high,ssim_mean,ssim_ci_low,ssim_ci_high,n\n";
    for (const auto& r : io::read_json(eval)) {
      out << r.at("views").get<int>() << ',' << r.at("variant").get<std::string>() << ',' << json_field(r["mse"], "mean")
          << ',' << json_field(r["mse"], "ci_low") << ',' << json_field(r["mse"], "ci_high") << ','
          << json_field(r["ssim"], "mean") << ',' << json_field(r["ssim"], "ci_low") << ','
          << json_field(r["ssim"], "ci_high") << ',' << r["mse"].at("n").get<std::size_t>() << '\n';
    }
    io::write_text(cfg.report_dir() / "table4.csv", out.str());
  }
  if (fs::exists(study_report)) {
    std::ostringstream out;
    out << "views,variant,sensitivity,specificity,f1,npv,tp,fp,tn,fn,n\n";
    const json rep = io::read_json(study_report);
    for (const auto& c : rep.at("cells")) {
      const auto& k = c.at("confusion");
      out << c.at("views").get<int>() << ',' << c.at("variant").get<std::string>() << ',' << json_field(c, "sensitivity")
          << ',' << json_field(c, "specificity") << ',' << json_field(c, "f1") << ',' << json_field(c, "npv") << ','
          << k.at("tp") << ',' << k.at("fp") << ',' << k.at("tn") << ',' << k.at("fn") << ',' << c.at("n") << '\n';
    }
    io::write_text(cfg.report_dir() / "table5.csv", out.str());
  }
}

}  // namespace sct::pipeline
