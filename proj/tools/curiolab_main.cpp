#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "curiolab/pipeline.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStageFailure = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;     // overrides config.out_dir when set
  std::string ratings;     // overrides config.ratings_path when set
  int threads = 0;         // overrides config.threads when > 0
  int splits = 0;          // overrides config.n_splits when > 0
  std::uint64_t split_seed = 0;
  bool has_split_seed = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("-c,--config", o.config_path, "pipeline config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out_dir, "output directory override");
  cmd->add_option("-j,--threads", o.threads, "worker thread override");
}

curiolab::PipelineConfig load_config(const CommonOpts& o) {
  curiolab::PipelineConfig cfg = curiolab::PipelineConfig::load(o.config_path);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.ratings.empty()) cfg.ratings_path = o.ratings;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.splits > 0) cfg.n_splits = o.splits;
  if (o.has_split_seed) cfg.split_seed = o.split_seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curiolab: physical intrinsic-motivation laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* generate = app.add_subcommand(
      "generate", "simulate the train/test trajectory splits");
  auto* train =
      app.add_subcommand("train", "train the world-model ensemble");
  auto* score = app.add_subcommand(
      "score", "sweep all IRFs over the test split into the IR table");
  auto* synth = app.add_subcommand(
      "synth-ratings", "generate synthetic rater responses from the IR table");
  auto* fit = app.add_subcommand(
      "fit", "fit single and composite models against the ratings");
  auto* report =
      app.add_subcommand("report", "render report CSV and SVG figures");
  auto* run = app.add_subcommand("run", "execute the whole pipeline");
  for (CLI::App* cmd : {generate, train, score, synth, fit, report, run})
    add_common(cmd, opts);
  for (CLI::App* cmd : {synth, fit, run})
    cmd->add_option("--ratings", opts.ratings,
                    "external ratings CSV (replaces the synthetic raters)");
  for (CLI::App* cmd : {fit, run}) {
    cmd->add_option("--splits", opts.splits, "evaluation split count");
    cmd->add_option("--seed", opts.split_seed, "evaluation split seed")
        ->each([&opts](const std::string&) { opts.has_split_seed = true; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const curiolab::PipelineConfig cfg = load_config(opts);
    std::ostream* log = &std::cout;
    if (generate->parsed()) curiolab::stage_generate(cfg, log);
    if (train->parsed()) curiolab::stage_train(cfg, log);
    if (score->parsed()) curiolab::stage_score(cfg, log);
    if (synth->parsed()) curiolab::stage_ratings(cfg, log);
    if (fit->parsed()) curiolab::stage_fit(cfg, log);
    if (report->parsed()) curiolab::stage_report(cfg, log);
    if (run->parsed()) {
      curiolab::run_pipeline(cfg, log);
      std::cout << "run: complete, report at "
                << curiolab::report_json_path(cfg) << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return 0;
}
