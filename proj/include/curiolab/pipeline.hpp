#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "curiolab/irf.hpp"
#include "curiolab/ratings.hpp"
#include "curiolab/sim.hpp"
#include "curiolab/stats.hpp"
#include "curiolab/wm.hpp"

namespace curiolab {

// One versioned document fully specifying a run; the FNV-1a hash of its
// canonical serialization (minus output locations) is echoed into every
// artifact.
struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 1;
  int train_per_scenario = 40;
  int test_per_scenario = 10;
  SimConfig sim;
  WmConfig wm;
  TrainSchedule schedule;  // checkpoint_steps default {0, 250, 500}
  int ensemble_size = 3;
  std::vector<int> k_grid = {1, 2, 3, 4};
  std::vector<long> delta_grid = {250};
  RndConfig rnd;
  long rnd_train_steps = 500;
  int feature_bins = 10;
  SyntheticRaterModel rater;  // drives synth-ratings when ratings_path empty
  std::uint64_t rating_seed = 1;
  std::string ratings_path;  // external ratings CSV; overrides the rater model
  int n_splits = 10;
  std::uint64_t split_seed = 1;
  int reliability_splits = 20;
  std::string out_dir = "out";
  int threads = 4;  // per-trajectory scoring parallelism

  void validate() const;
  std::string hash() const;  // hex FNV-1a of the canonical form

  std::string to_json() const;  // canonical, indent 2
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig load(const std::string& path);
  void save(const std::string& path) const;
};

// Canonical single-predictor names: the four IRF families at the final
// checkpoint (k = 1, largest delta) plus every scene feature.
struct IrfScore {
  std::string name;
  std::string kind;  // "irf" or "feature"
  double mean_r = 0.0;
  double sem_r = 0.0;
  double pooled_r = 0.0;
};

struct EvalReport {
  std::string config_hash;
  double ceiling_mean = 0.0;  // split-half noise ceiling, Spearman-Brown
  double ceiling_sem = 0.0;
  std::vector<std::pair<std::string, double>> ceiling_per_scenario;
  std::vector<IrfScore> singles;
  std::vector<IrfScore> per_k;  // "<irf>@k<k>" at the final checkpoint
  IrfScore composite;           // lasso over scene features
  double composite_lambda = 0.0;
  std::vector<std::pair<std::string, double>> composite_coefs;
  ScenarioMatrix matrix;  // singles x scenarios
  std::vector<ComplementarityEntry> complementarity;  // base = adversarial
  std::vector<std::pair<long, double>> train_adv_by_ckpt;  // mean total IR

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

// Pipeline stages. Each stage persists its outputs under cfg.out_dir,
// skips work whose artifacts already exist with a matching config hash,
// and refuses artifacts written under a different hash.
void stage_generate(const PipelineConfig& cfg, std::ostream* log = nullptr);
void stage_train(const PipelineConfig& cfg, std::ostream* log = nullptr);
void stage_score(const PipelineConfig& cfg, std::ostream* log = nullptr);
void stage_ratings(const PipelineConfig& cfg, std::ostream* log = nullptr);
EvalReport stage_fit(const PipelineConfig& cfg, std::ostream* log = nullptr);
void stage_report(const PipelineConfig& cfg, std::ostream* log = nullptr);

EvalReport run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr);

// Artifact locations, all under cfg.out_dir.
std::string trajectory_dir(const PipelineConfig& cfg, bool train_split);
std::string ir_table_path(const PipelineConfig& cfg);
std::string train_adv_path(const PipelineConfig& cfg);
std::string ratings_csv_path(const PipelineConfig& cfg);
std::string report_json_path(const PipelineConfig& cfg);
std::string report_csv_path(const PipelineConfig& cfg);

std::vector<Trajectory> load_split(const PipelineConfig& cfg, bool train_split);

}  // namespace curiolab
