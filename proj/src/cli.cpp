#include "sct/cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>

#include "sct/config.hpp"
#include "sct/error.hpp"
#include "sct/pipeline.hpp"

namespace sct::cli {

namespace {

using pipeline::PipelineConfig;
using Action = std::function<void(const PipelineConfig&, std::ostream&)>;

const std::vector<std::pair<std::string, std::pair<std::string, Action>>>& subcommands() {
  static const std::vector<std::pair<std::string, std::pair<std::string, Action>>> table{
      {"phantom",
       {"Generate the phantom dataset",
        [](const PipelineConfig& c, std::ostream& out) {
          out << pipeline::run_phantom(c).size() << " slices written to " << c.dataset_dir().string() << '\n';
        }}},
      {"simulate",
       {"Project, subsample and reconstruct every slice",
        [](const PipelineConfig& c, std::ostream& out) {
          const auto m = pipeline::run_simulate(c);
          out << m.entries.size() << " slices simulated at " << m.levels.size() << " sparse levels\n";
        }}},
      {"train",
       {"Train one network per configured view level",
        [](const PipelineConfig& c, std::ostream& out) {
          for (int v : pipeline::run_train(c)) out << "trained " << (c.model_dir(v) / "checkpoint.bin").string() << '\n';
        }}},
      {"infer",
       {"Postprocess test and study slices",
        [](const PipelineConfig& c, std::ostream& out) {
          pipeline::run_infer(c);
          out << "postprocessed images in " << c.infer_dir().string() << '\n';
        }}},
      {"evaluate",
       {"Compute MSE and SSIM against the full-view images",
        [](const PipelineConfig& c, std::ostream& out) {
          out << pipeline::run_evaluate(c).size() << " images evaluated; see " << (c.eval_dir() / "metrics.csv").string()
              << '\n';
        }}},
      {"study-init",
       {"Create the reader study store",
        [](const PipelineConfig& c, std::ostream& out) {
          for (const auto& r : pipeline::run_study_init(c)) out << r.reader_id << ' ' << r.token << '\n';
        }}},
      {"study-serve",
       {"Serve the reader study over HTTP", [](const PipelineConfig& c, std::ostream&) { pipeline::run_study_serve(c); }}},
      {"study-analyze",
       {"Analyze recorded annotations",
        [](const PipelineConfig& c, std::ostream& out) {
          const auto r = pipeline::run_study_analyze(c);
          out << r.n_annotations << " annotations analyzed; see " << (c.study_dir() / "analysis").string() << '\n';
        }}},
      {"report",
       {"Render the metric and diagnostic tables",
        [](const PipelineConfig& c, std::ostream& out) {
          pipeline::run_report(c);
          out << "tables in " << c.report_dir().string() << '\n';
        }}},
  };
  return table;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-view CT workbench", "sparse-ct-lab"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> assignments;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : subcommands()) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--set", assignments, "Override a key, e.g. training.max_epochs=5");
    subs[name] = sub;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const auto* chosen = app.get_subcommands().front();
    const auto cfg = PipelineConfig::from_json(config::resolve(config_path, assignments));
    for (const auto& [name, entry] : subcommands())
      if (name == chosen->get_name()) entry.second(cfg, out);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConflictError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace sct::cli
