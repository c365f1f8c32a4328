#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "sct/cli.hpp"
#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/pipeline.hpp"

using namespace sct;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sct_test_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json small_config(const fs::path& work) {
  return {{"paths", {{"work", work.string()}}},
          {"dataset",
           {{"n_train", 1}, {"n_val", 1}, {"n_test", 1}, {"slices_per_subject", 1}, {"phantom", {{"size", 64}, {"pixel_size_mm", 2.0}}}}},
          {"simulation", {{"levels", {16, 2048}}}},
          {"network", {{"depth", 2}, {"base_channels", 2}, {"input_size", 64}}},
          {"training", {{"views", {16}}, {"max_epochs", 1}, {"patience", 1}, {"batch_size", 2}}}};
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const fs::path& cfg, std::vector<std::string> args) {
  args.insert(args.end(), {"--config", cfg.string()});
  std::ostringstream out, err;
  const int code = cli::run_subcommand(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const json& cfg) {
  const auto p = dir / "config.json";
  io::write_json(p, cfg);
  return p;
}

std::set<std::string> files_under(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& f : fs::recursive_directory_iterator(root))
    if (f.is_regular_file() && f.path().filename() != ".lock") out.insert(fs::relative(f.path(), root).generic_string());
  return out;
}

}  // namespace

TEST_CASE("simulate emits full, sparse and residual images that reconcile exactly") {
  const auto dir = temp_dir("simulate");
  json cfg = small_config(dir / "work");
  cfg["dataset"]["n_train"] = 0;
  cfg["dataset"]["n_val"] = 0;
  const auto path = write_config(dir, cfg);
  REQUIRE(run(path, {"phantom"}).code == 0);
  REQUIRE(run(path, {"simulate"}).code == 0);

  const auto sim = dir / "work" / "sim";
  const auto m = pipeline::read_sim_manifest(sim);
  REQUIRE(m.entries.size() == 1);
  CHECK(m.levels == std::vector<int>{16});
  const auto& e = m.entries[0];
  REQUIRE(e.levels.size() == 1);
  const auto full = io::read_raw_image(sim / e.full);
  const auto sparse = io::read_raw_image(sim / e.levels.at(16).sparse);
  const auto residual = io::read_raw_image(sim / e.levels.at(16).residual);
  CHECK(full.unit == UnitTag::Normalized);
  CHECK(residual.unit == UnitTag::Residual);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < full.size(); ++i)
    if (sparse.values[i] - residual.values[i] != full.values[i]) ++mismatches;
  CHECK(mismatches == 0);
  double residual_energy = 0;
  for (float v : residual.values) residual_energy += v * v;
  CHECK(residual_energy > 0);

  // The manifest references exactly the files simulate wrote.
  std::set<std::string> referenced{"manifest.json"};
  for (const auto& ent : m.entries) {
    for (const auto& ref : {ent.full, e.levels.at(16).sparse, e.levels.at(16).residual}) {
      referenced.insert(ref);
      referenced.insert(ref + ".json");
    }
    if (ent.mask) referenced.insert(*ent.mask);
  }
  CHECK(files_under(sim) == referenced);
  fs::remove_all(dir);
}

TEST_CASE("evaluate on identical pairs gives zero error and unit similarity") {
  const auto dir = temp_dir("evaluate");
  const auto path = write_config(dir, small_config(dir / "work"));
  REQUIRE(run(path, {"phantom"}).code == 0);
  REQUIRE(run(path, {"simulate"}).code == 0);
  const auto images = dir / "work" / "sim" / "S002" / "slice00";
  const auto r = run(path, {"evaluate", "--set", "evaluate.reference_dir=" + images.string(), "--set",
                            "evaluate.candidate_dir=" + images.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream csv(io::read_text(dir / "work" / "eval" / "per_image.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "slice_id,views,variant,mse,ssim");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.substr(line.size() - 4) == ",0,1");
  }
  CHECK(rows == 3);
  fs::remove_all(dir);
}

TEST_CASE("every stage is reproducible byte for byte") {
  const auto dir = temp_dir("determinism");
  std::vector<std::map<std::string, std::vector<std::uint8_t>>> outputs;
  for (const char* name : {"a", "b"}) {
    const auto work = dir / name;
    fs::create_directories(work);
    const auto path = write_config(work, small_config(work / "work"));
    for (const char* stage : {"phantom", "simulate", "train", "infer", "evaluate", "report"}) {
      const auto r = run(path, {stage});
      REQUIRE_MESSAGE(r.code == 0, stage << ": " << r.err);
    }
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& rel : files_under(work / "work")) files[rel] = io::read_bytes(work / "work" / rel);
    outputs.push_back(std::move(files));
  }
  REQUIRE(outputs[0].size() == outputs[1].size());
  CHECK(outputs[0].count("model/v16/checkpoint.bin") == 1);
  CHECK(outputs[0].count("report/table4.csv") == 1);
  for (const auto& [rel, bytes] : outputs[0]) {
    INFO(rel);
    REQUIRE(outputs[1].count(rel) == 1);
    CHECK(bytes == outputs[1].at(rel));
  }
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = temp_dir("exit");
  const auto path = write_config(dir, small_config(dir / "work"));
  std::ostringstream out, err;
  CHECK(cli::run_subcommand({}, out, err) == cli::kExitUsage);
  CHECK(cli::run_subcommand({"frobnicate", "--config", path.string()}, out, err) == cli::kExitUsage);
  CHECK(run(path, {"simulate", "--bogus"}).code == cli::kExitUsage);
  CHECK(cli::run_subcommand({"simulate"}, out, err) == cli::kExitUsage);
  CHECK(run(path, {"simulate", "--set", "nokey"}).code == cli::kExitUsage);
  CHECK(run(path, {"simulate", "--set", "simulation.levels=[17]"}).code == cli::kExitUsage);
  CHECK(run(path, {"simulate", "--set", "simulation.filter=\"box\""}).code == cli::kExitUsage);
  CHECK(run(path, {"train", "--set", "training.views=[32]"}).code == cli::kExitUsage);

  io::write_text(dir / "broken.json", "{\"paths\": ");
  CHECK(run(dir / "broken.json", {"phantom"}).code == cli::kExitUsage);

  const auto missing = run(path, {"simulate"});
  CHECK(missing.code == cli::kExitData);
  CHECK(missing.err.find("manifest") != std::string::npos);
  CHECK(run(path, {"train"}).code == cli::kExitData);
  CHECK(run(path, {"report"}).code == cli::kExitData);
  CHECK(run(path, {"study-analyze"}).code == cli::kExitData);

  const auto help = run(path, {"train", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--set") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("output directories are locked exclusively") {
  const auto dir = temp_dir("lock");
  pipeline::DirLock held(dir / "out");
  CHECK_THROWS_AS(pipeline::DirLock(dir / "out"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("config defaults and validation") {
  const auto c = pipeline::PipelineConfig::from_json(json::object());
  CHECK(c.full_views == 2048);
  CHECK(c.levels == std::vector<int>{16, 32, 64, 128, 256, 512});
  CHECK(c.network.input_size == 128);
  CHECK(c.service.store_path == fs::path("run/study/store.jsonl"));
  const auto round = pipeline::PipelineConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());
  CHECK_THROWS_AS(pipeline::PipelineConfig::from_json({{"network", {{"depth", "deep"}}}}), UsageError);
  CHECK_THROWS_AS(pipeline::PipelineConfig::from_json({{"network", {{"input_size", 64}}}}), UsageError);
  CHECK_THROWS_AS(pipeline::PipelineConfig::from_json({{"simulation", {{"levels", {16, 3}}}}}), UsageError);
}

TEST_CASE("study stages run from simulation to the diagnostic table") {
  const auto dir = temp_dir("study");
  json cfg = small_config(dir / "work");
  cfg["dataset"]["study_diseased"] = 2;
  cfg["dataset"]["study_healthy"] = 1;
  cfg["simulation"]["levels"] = {16, 32, 64, 128, 256, 2048};
  cfg["training"]["views"] = {16, 32, 64, 128, 256};
  const auto path = write_config(dir, cfg);
  for (const char* stage : {"phantom", "simulate", "infer"}) {
    const auto r = run(path, {stage});
    if (std::string(stage) == "infer") CHECK(r.code == cli::kExitData);  // nothing trained yet
    else REQUIRE(r.code == 0);
  }
  REQUIRE(run(path, {"train"}).code == 0);
  REQUIRE(run(path, {"infer"}).code == 0);
  const auto init = run(path, {"study-init"});
  REQUIRE_MESSAGE(init.code == 0, init.err);
  CHECK(std::count(init.out.begin(), init.out.end(), '\n') == 3);
  CHECK(run(path, {"study-init"}).code == cli::kExitData);  // store exists

  const auto study_dir = dir / "work" / "study";
  for (const auto& f : fs::directory_iterator(study_dir / "images")) {
    const auto name = f.path().filename().string();
    for (const char* word : {"sparse", "processed", "_16", "_32", "_64", "_128", "_256"})
      CHECK(name.find(word) == std::string::npos);
  }
  {
    auto store = study::StudyStore::open(study_dir / "store.jsonl");
    CHECK(store->items().size() == 30);
    const auto subjects = store->subjects();
    for (const auto& reader : store->readers())
      for (const auto& item_id : reader.order) {
        const auto item = *store->item(item_id);
        const auto& subj = *std::find_if(subjects.begin(), subjects.end(),
                                         [&](const auto& s) { return s.subject_id == item.subject_id; });
        study::Annotation a;
        a.reader_id = reader.reader_id;
        a.item_id = item_id;
        a.quality = item.variant == study::ImageVariant::Processed ? 5 : 3;
        a.confidence = 4;
        a.artifacts = 1;
        a.mask = subj.truth;
        store->record_annotation(a);
      }
  }
  REQUIRE(run(path, {"study-analyze"}).code == 0);
  REQUIRE(run(path, {"report"}).code == 0);
  std::istringstream csv(io::read_text(dir / "work" / "report" / "table5.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "views,variant,sensitivity,specificity,f1,npv,tp,fp,tn,fn,n");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    // Perfect reads: 6 diseased reads and 3 healthy reads per cell.
    CHECK(line.find(",1,1,1,1,6,0,3,0,9") != std::string::npos);
  }
  CHECK(rows == 10);
  fs::remove_all(dir);
}
