#include "curiolab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "curiolab/rng.hpp"
#include "curiolab/traj_io.hpp"

namespace curiolab {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t i) {
  std::uint64_t h = fnv1a(&base, sizeof(base));
  h = fnv1a(&tag, sizeof(tag), h);
  return fnv1a(&i, sizeof(i), h);
}

void log_line(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << "\n";
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Fn>
void rethrow_with_stage(const std::string& stage, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("stage " + stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + stage + ": " + e.what());
  }
}

// ---- config serialization --------------------------------------------------

ordered_json config_to_json(const PipelineConfig& c, bool for_hash) {
  ordered_json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["train_per_scenario"] = c.train_per_scenario;
  j["test_per_scenario"] = c.test_per_scenario;
  ordered_json sim;
  sim["dt"] = c.sim.dt;
  sim["steps"] = c.sim.steps;
  sim["gravity"] = c.sim.gravity;
  sim["ground_height"] = c.sim.ground_height;
  sim["contact_threshold"] = c.sim.contact_threshold;
  sim["particle_radius"] = c.sim.particle_radius;
  sim["lattice_spacing"] = c.sim.lattice_spacing;
  sim["cloth_stiffness"] = c.sim.cloth_stiffness;
  sim["cloth_damping"] = c.sim.cloth_damping;
  sim["link_stiffness"] = c.sim.link_stiffness;
  sim["link_damping"] = c.sim.link_damping;
  sim["min_extra_distractors"] = c.sim.min_extra_distractors;
  sim["max_extra_distractors"] = c.sim.max_extra_distractors;
  j["sim"] = sim;
  j["wm"]["hidden"] = c.wm.hidden;
  ordered_json sched;
  sched["checkpoint_steps"] = c.schedule.checkpoint_steps;
  sched["lr"] = c.schedule.lr;
  sched["batch_size"] = c.schedule.batch_size;
  sched["shuffle_seed"] = c.schedule.shuffle_seed;
  j["schedule"] = sched;
  j["ensemble_size"] = c.ensemble_size;
  j["k_grid"] = c.k_grid;
  j["delta_grid"] = c.delta_grid;
  ordered_json rnd;
  rnd["hidden"] = c.rnd.hidden;
  rnd["embed_dim"] = c.rnd.embed_dim;
  rnd["batch_size"] = c.rnd.batch_size;
  j["rnd"] = rnd;
  j["rnd_train_steps"] = c.rnd_train_steps;
  j["feature_bins"] = c.feature_bins;
  ordered_json rater;
  rater["driver_weights"] = c.rater.driver_weights;
  rater["noise_std"] = c.rater.noise_std;
  rater["n_raters"] = c.rater.n_raters;
  rater["thresholds"] = c.rater.thresholds;
  j["rater"] = rater;
  j["rating_seed"] = c.rating_seed;
  j["ratings_path"] = c.ratings_path;
  j["n_splits"] = c.n_splits;
  j["split_seed"] = c.split_seed;
  j["reliability_splits"] = c.reliability_splits;
  if (!for_hash) {
    // Output locations and parallelism do not influence results, so they
    // stay out of the hash.
    j["out_dir"] = c.out_dir;
    j["threads"] = c.threads;
  }
  return j;
}

PipelineConfig config_from_json(const ordered_json& j) {
  PipelineConfig c;
  c.version = j.at("version").get<int>();
  if (c.version != 1)
    throw std::invalid_argument("config: unsupported version " +
                                std::to_string(c.version));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_per_scenario = j.at("train_per_scenario").get<int>();
  c.test_per_scenario = j.at("test_per_scenario").get<int>();
  const auto& sim = j.at("sim");
  c.sim.dt = sim.at("dt").get<double>();
  c.sim.steps = sim.at("steps").get<int>();
  c.sim.gravity = sim.at("gravity").get<double>();
  c.sim.ground_height = sim.at("ground_height").get<double>();
  c.sim.contact_threshold = sim.at("contact_threshold").get<double>();
  c.sim.particle_radius = sim.at("particle_radius").get<double>();
  c.sim.lattice_spacing = sim.at("lattice_spacing").get<double>();
  c.sim.cloth_stiffness = sim.at("cloth_stiffness").get<double>();
  c.sim.cloth_damping = sim.at("cloth_damping").get<double>();
  c.sim.link_stiffness = sim.at("link_stiffness").get<double>();
  c.sim.link_damping = sim.at("link_damping").get<double>();
  c.sim.min_extra_distractors = sim.at("min_extra_distractors").get<int>();
  c.sim.max_extra_distractors = sim.at("max_extra_distractors").get<int>();
  c.wm.hidden = j.at("wm").at("hidden").get<std::vector<int>>();
  const auto& sched = j.at("schedule");
  c.schedule.checkpoint_steps =
      sched.at("checkpoint_steps").get<std::vector<long>>();
  c.schedule.lr = sched.at("lr").get<double>();
  c.schedule.batch_size = sched.at("batch_size").get<int>();
  c.schedule.shuffle_seed = sched.at("shuffle_seed").get<std::uint64_t>();
  c.ensemble_size = j.at("ensemble_size").get<int>();
  c.k_grid = j.at("k_grid").get<std::vector<int>>();
  c.delta_grid = j.at("delta_grid").get<std::vector<long>>();
  const auto& rnd = j.at("rnd");
  c.rnd.hidden = rnd.at("hidden").get<std::vector<int>>();
  c.rnd.embed_dim = rnd.at("embed_dim").get<int>();
  c.rnd.batch_size = rnd.at("batch_size").get<int>();
  c.rnd_train_steps = j.at("rnd_train_steps").get<long>();
  c.feature_bins = j.at("feature_bins").get<int>();
  const auto& rater = j.at("rater");
  c.rater.driver_weights =
      rater.at("driver_weights").get<std::map<std::string, double>>();
  c.rater.noise_std = rater.at("noise_std").get<double>();
  c.rater.n_raters = rater.at("n_raters").get<int>();
  c.rater.thresholds = rater.at("thresholds").get<std::vector<double>>();
  c.rating_seed = j.at("rating_seed").get<std::uint64_t>();
  c.ratings_path = j.at("ratings_path").get<std::string>();
  c.n_splits = j.at("n_splits").get<int>();
  c.split_seed = j.at("split_seed").get<std::uint64_t>();
  c.reliability_splits = j.at("reliability_splits").get<int>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  return c;
}

// ---- artifact helpers ------------------------------------------------------

std::string manifest_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "manifest.json").string();
}

void write_manifest(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  ordered_json j;
  j["version"] = cfg.version;
  j["config_hash"] = cfg.hash();
  std::ofstream os(manifest_path(cfg), std::ios::binary);
  os << j.dump(2) << "\n";
  std::ofstream cs(fs::path(cfg.out_dir) / "config.json", std::ios::binary);
  cs << cfg.to_json() << "\n";
}

void check_manifest(const PipelineConfig& cfg) {
  std::ifstream is(manifest_path(cfg));
  if (!is)
    throw std::runtime_error("missing manifest; run the generate stage first");
  ordered_json j = ordered_json::parse(is);
  const std::string have = j.at("config_hash").get<std::string>();
  if (have != cfg.hash())
    throw std::runtime_error("artifact tree was built under config hash " +
                             have + ", refusing to mix with " + cfg.hash());
}

std::string traj_file(const PipelineConfig& cfg, bool train, Scenario sc,
                      int i) {
  return (fs::path(trajectory_dir(cfg, train)) /
          (to_string(sc) + "_" + std::to_string(i) + ".traj"))
      .string();
}

std::uint64_t traj_seed(const PipelineConfig& cfg, bool train, Scenario sc,
                        int i) {
  const std::uint64_t tag =
      (train ? 0x7261696eULL : 0x74657374ULL) ^ (std::uint64_t(sc) << 32);
  return mix_seed(cfg.seed, tag, std::uint64_t(i));
}

int split_count(const PipelineConfig& cfg, bool train) {
  return train ? cfg.train_per_scenario : cfg.test_per_scenario;
}

std::string model_file(const PipelineConfig& cfg, int member, long step) {
  return (fs::path(cfg.out_dir) / "models" /
          ("wm_s" + std::to_string(member) + "_step" + std::to_string(step) +
           ".cwm"))
      .string();
}

std::vector<std::vector<Checkpoint>> load_ensembles(
    const PipelineConfig& cfg) {
  std::vector<std::vector<Checkpoint>> ensembles;
  for (int m = 0; m < cfg.ensemble_size; ++m) {
    std::vector<Checkpoint> grid;
    for (long step : cfg.schedule.checkpoint_steps)
      grid.push_back({WorldModel::load(model_file(cfg, m, step)), step});
    ensembles.push_back(std::move(grid));
  }
  return ensembles;
}

RndPair build_rnd(const PipelineConfig& cfg, const Normalizer& norm,
                  const std::vector<SceneState>& states) {
  RndPair pair = rnd_init(mix_seed(cfg.seed, 0x726e64ULL, 0),
                          mix_seed(cfg.seed, 0x726e64ULL, 1),
                          cfg.rnd.embed_dim, norm, cfg.rnd);
  rnd_train(pair, states, static_cast<int>(cfg.rnd_train_steps));
  return pair;
}

// Runs fn(i) for i in [0, n) across cfg.threads workers; results are
// collected by index so the merge order is deterministic.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  std::atomic<int> next{0};
  std::vector<std::future<void>> futs;
  for (int w = 0; w < threads; ++w)
    futs.push_back(std::async(std::launch::async, [&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    }));
  for (auto& f : futs) f.get();
}

// Stimulus/driver columns of the IR table in the order of `trajs`.
std::map<std::string, std::vector<double>> driver_columns(
    const PipelineConfig& cfg, const IrTable& table,
    const std::vector<std::string>& ids) {
  const long final_step = cfg.schedule.checkpoint_steps.back();
  std::map<std::string, std::vector<double>> cols;
  auto add_column = [&](const std::string& name,
                        const std::map<std::string, double>& by_id) {
    if (by_id.empty()) return;
    std::vector<double> v;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::runtime_error("IR table is missing stimulus " + id);
      v.push_back(it->second);
    }
    cols[name] = std::move(v);
  };
  add_column("adversarial", table.column("adversarial", final_step, 1));
  add_column("disagreement", table.column("disagreement", final_step, 1));
  add_column("rnd", table.column("rnd", cfg.rnd_train_steps, 0));
  for (long d : cfg.delta_grid)
    add_column("delta_progress_" + std::to_string(d),
               table.column("delta_progress_" + std::to_string(d), final_step,
                            1));
  for (std::size_t f = 0; f < feature_catalog().size(); ++f) {
    std::vector<double> v;
    for (const auto& id : ids) {
      auto it = table.features.find(id);
      if (it == table.features.end())
        throw std::runtime_error("IR table is missing features for " + id);
      v.push_back(it->second.values[f]);
    }
    cols[feature_catalog()[f]] = std::move(v);
  }
  return cols;
}

// ---- report serialization --------------------------------------------------

ordered_json score_to_json(const IrfScore& s) {
  ordered_json j;
  j["name"] = s.name;
  j["kind"] = s.kind;
  j["mean_r"] = s.mean_r;
  j["sem_r"] = s.sem_r;
  j["pooled_r"] = s.pooled_r;
  return j;
}

IrfScore score_from_json(const ordered_json& j) {
  IrfScore s;
  s.name = j.at("name").get<std::string>();
  s.kind = j.at("kind").get<std::string>();
  s.mean_r = j.at("mean_r").get<double>();
  s.sem_r = j.at("sem_r").get<double>();
  s.pooled_r = j.at("pooled_r").get<double>();
  return s;
}

}  // namespace

// ---- PipelineConfig --------------------------------------------------------

void PipelineConfig::validate() const {
  if (version != 1) throw std::invalid_argument("config: version must be 1");
  if (train_per_scenario < 1 || test_per_scenario < 1)
    throw std::invalid_argument("config: per-scenario counts must be >= 1");
  sim.validate();
  schedule.validate();
  if (ensemble_size < 1)
    throw std::invalid_argument("config: ensemble_size must be >= 1");
  if (k_grid.empty()) throw std::invalid_argument("config: empty k grid");
  for (int k : k_grid)
    if (k < 1 || k > 4)
      throw std::invalid_argument("config: k must lie in 1..4");
  for (long d : delta_grid)
    if (d <= 0 || d > schedule.checkpoint_steps.back())
      throw std::invalid_argument(
          "config: delta must be positive and within the schedule");
  if (rnd_train_steps < 0)
    throw std::invalid_argument("config: negative rnd_train_steps");
  if (feature_bins < 1)
    throw std::invalid_argument("config: feature_bins must be >= 1");
  if (ratings_path.empty()) rater.validate();
  if (n_splits < 2) throw std::invalid_argument("config: n_splits must be >= 2");
  if (reliability_splits < 1)
    throw std::invalid_argument("config: reliability_splits must be >= 1");
  if (out_dir.empty()) throw std::invalid_argument("config: empty out_dir");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
}

std::string PipelineConfig::hash() const {
  const std::string canon = config_to_json(*this, true).dump();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a(canon.data(), canon.size())));
  return buf;
}

std::string PipelineConfig::to_json() const {
  return config_to_json(*this, false).dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  return config_from_json(ordered_json::parse(text));
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  PipelineConfig cfg = from_json(ss.str());
  cfg.validate();
  return cfg;
}

void PipelineConfig::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os << to_json() << "\n";
}

// ---- artifact paths --------------------------------------------------------

std::string trajectory_dir(const PipelineConfig& cfg, bool train_split) {
  return (fs::path(cfg.out_dir) / "trajectories" /
          (train_split ? "train" : "test"))
      .string();
}

std::string ir_table_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "ir_table.csv").string();
}

std::string train_adv_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "train_adversarial.csv").string();
}

std::string ratings_csv_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "ratings.csv").string();
}

std::string report_json_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "report.json").string();
}

std::string report_csv_path(const PipelineConfig& cfg) {
  return (fs::path(cfg.out_dir) / "report.csv").string();
}

std::vector<Trajectory> load_split(const PipelineConfig& cfg,
                                   bool train_split) {
  std::vector<Trajectory> trajs;
  for (Scenario sc : all_scenarios())
    for (int i = 0; i < split_count(cfg, train_split); ++i)
      trajs.push_back(load_trajectory(traj_file(cfg, train_split, sc, i)));
  return trajs;
}

// ---- stages ----------------------------------------------------------------

void stage_generate(const PipelineConfig& cfg, std::ostream* log) {
  rethrow_with_stage("generate", [&] {
    cfg.validate();
    const std::string hash = cfg.hash();
    write_manifest(cfg);
    for (bool train : {true, false}) {
      fs::create_directories(trajectory_dir(cfg, train));
      int made = 0, reused = 0;
      for (Scenario sc : all_scenarios())
        for (int i = 0; i < split_count(cfg, train); ++i) {
          const std::string path = traj_file(cfg, train, sc, i);
          if (fs::exists(path)) {
            const std::string have = trajectory_config_hash(path);
            if (have != hash)
              throw std::runtime_error(path + " was written under hash " +
                                       have + ", refusing to mix with " +
                                       hash);
            ++reused;
            continue;
          }
          const std::uint64_t seed = traj_seed(cfg, train, sc, i);
          Trajectory traj = simulate(generate_scenario(sc, seed, cfg.sim),
                                     cfg.sim.steps, cfg.sim.dt);
          save_trajectory(traj, path, hash);
          ++made;
        }
      log_line(log, "generate: " + std::string(train ? "train" : "test") +
                        " split, " + std::to_string(made) + " new, " +
                        std::to_string(reused) + " reused");
    }
  });
}

void stage_train(const PipelineConfig& cfg, std::ostream* log) {
  rethrow_with_stage("train", [&] {
    cfg.validate();
    check_manifest(cfg);
    fs::create_directories(fs::path(cfg.out_dir) / "models");
    bool all_present = true;
    for (int m = 0; m < cfg.ensemble_size && all_present; ++m)
      for (long step : cfg.schedule.checkpoint_steps)
        if (!fs::exists(model_file(cfg, m, step))) {
          all_present = false;
          break;
        }
    if (all_present) {
      log_line(log, "train: all checkpoints present, skipping");
      return;
    }
    const std::vector<Trajectory> trajs = load_split(cfg, true);
    const TransitionDataset data = TransitionDataset::from_trajectories(trajs);
    std::vector<int> members(cfg.ensemble_size);
    std::iota(members.begin(), members.end(), 0);
    parallel_for(cfg.ensemble_size, cfg.threads, [&](int m) {
      WorldModel wm =
          WorldModel::init(mix_seed(cfg.seed, 0x776dULL, m), cfg.wm);
      TrainSchedule sched = cfg.schedule;
      sched.shuffle_seed = mix_seed(cfg.schedule.shuffle_seed, 0x736877ULL, m);
      for (const Checkpoint& ckpt : wm.train(data, sched))
        ckpt.params.save(model_file(cfg, m, ckpt.step));
    });
    log_line(log, "train: " + std::to_string(cfg.ensemble_size) +
                      " members x " +
                      std::to_string(cfg.schedule.checkpoint_steps.size()) +
                      " checkpoints");
  });
}

void stage_score(const PipelineConfig& cfg, std::ostream* log) {
  rethrow_with_stage("score", [&] {
    cfg.validate();
    check_manifest(cfg);
    const std::string hash = cfg.hash();
    if (fs::exists(ir_table_path(cfg)) && fs::exists(train_adv_path(cfg))) {
      std::string have;
      read_ir_table_csv(ir_table_path(cfg), &have);
      if (have != hash)
        throw std::runtime_error("ir_table.csv was written under hash " +
                                 have + ", refusing to mix with " + hash);
      log_line(log, "score: IR table present, skipping");
      return;
    }
    const auto ensembles = load_ensembles(cfg);
    const std::vector<Trajectory> train_trajs = load_split(cfg, true);
    const std::vector<Trajectory> test_trajs = load_split(cfg, false);

    std::vector<SceneState> rnd_states;
    for (const auto& t : train_trajs)
      for (const auto& s : t.states) rnd_states.push_back(s);
    RndPair rnd = build_rnd(cfg, ensembles[0][0].params.input_norm, rnd_states);
    std::vector<std::pair<long, RndPair>> rnd_ckpts;
    rnd_ckpts.emplace_back(cfg.rnd_train_steps, std::move(rnd));

    // Per-trajectory sweeps run in parallel, merged in trajectory order.
    std::vector<IrTable> partial(test_trajs.size());
    parallel_for(static_cast<int>(test_trajs.size()), cfg.threads, [&](int i) {
      partial[i] = sweep(ensembles, rnd_ckpts, cfg.k_grid, cfg.delta_grid,
                         {test_trajs[i]}, cfg.feature_bins);
    });
    IrTable table;
    for (auto& p : partial) {
      table.rows.insert(table.rows.end(), p.rows.begin(), p.rows.end());
      table.features.insert(p.features.begin(), p.features.end());
      table.scenario_of.insert(p.scenario_of.begin(), p.scenario_of.end());
    }
    write_ir_table_csv(table, ir_table_path(cfg), hash);

    // Mean adversarial total IR on the train split per checkpoint (k = 1),
    // the stability diagnostic.
    const auto& grid = ensembles[0];
    std::vector<std::vector<double>> per_traj(train_trajs.size());
    parallel_for(static_cast<int>(train_trajs.size()), cfg.threads,
                 [&](int i) {
                   for (const auto& ckpt : grid)
                     per_traj[i].push_back(
                         adversarial_reward(ckpt, train_trajs[i], 1).total);
                 });
    std::ofstream os(train_adv_path(cfg), std::ios::binary);
    os << "# config_hash=" << hash << "\n";
    os << "ckpt_step,mean_adversarial_total\n";
    for (std::size_t c = 0; c < grid.size(); ++c) {
      double mean = 0.0;
      for (const auto& v : per_traj) mean += v[c] / double(per_traj.size());
      os << grid[c].step << "," << fmt_g(mean) << "\n";
    }
    log_line(log, "score: " + std::to_string(table.rows.size()) +
                      " IR rows over " + std::to_string(test_trajs.size()) +
                      " stimuli");
  });
}

void stage_ratings(const PipelineConfig& cfg, std::ostream* log) {
  rethrow_with_stage("ratings", [&] {
    cfg.validate();
    check_manifest(cfg);
    if (!cfg.ratings_path.empty()) {
      // External ratings: validate and normalize into the artifact tree.
      RatingDataset ds = ingest_ratings(cfg.ratings_path);
      write_ratings_csv(ds, ratings_csv_path(cfg));
      log_line(log, "ratings: ingested " + std::to_string(ds.stimuli.size()) +
                        " stimuli from " + cfg.ratings_path);
      return;
    }
    if (fs::exists(ratings_csv_path(cfg))) {
      log_line(log, "ratings: present, skipping");
      return;
    }
    std::string hash;
    IrTable table = read_ir_table_csv(ir_table_path(cfg), &hash);
    if (hash != cfg.hash())
      throw std::runtime_error("ir_table.csv hash mismatch");
    std::vector<std::string> ids;
    std::vector<Scenario> scenarios;
    for (Scenario sc : all_scenarios())
      for (int i = 0; i < cfg.test_per_scenario; ++i) {
        Trajectory t;
        t.scenario = sc;
        t.seed = traj_seed(cfg, false, sc, i);
        ids.push_back(t.id());
        scenarios.push_back(sc);
      }
    const auto cols = driver_columns(cfg, table, ids);
    RatingDataset ds = generate_synthetic_ratings(cfg.rater, ids, scenarios,
                                                  cols, cfg.rating_seed);
    write_ratings_csv(ds, ratings_csv_path(cfg));
    log_line(log, "ratings: synthesized " + std::to_string(ds.stimuli.size()) +
                      " stimuli x " + std::to_string(cfg.rater.n_raters) +
                      " raters");
  });
}

EvalReport stage_fit(const PipelineConfig& cfg, std::ostream* log) {
  EvalReport report;
  rethrow_with_stage("fit", [&] {
    cfg.validate();
    check_manifest(cfg);
    std::string hash;
    IrTable table = read_ir_table_csv(ir_table_path(cfg), &hash);
    if (hash != cfg.hash())
      throw std::runtime_error("ir_table.csv was written under hash " + hash +
                               ", refusing to mix with " + cfg.hash());
    RatingDataset ratings = ingest_ratings(ratings_csv_path(cfg));

    std::vector<std::string> ids;
    std::vector<Scenario> scenario_of;
    std::vector<double> y;
    for (const auto& s : ratings.stimuli) {
      ids.push_back(s.stimulus_id);
      scenario_of.push_back(s.scenario);
      y.push_back(s.mean_rating());
    }
    const auto cols = driver_columns(cfg, table, ids);

    report.config_hash = cfg.hash();

    // Noise ceiling.
    ReliabilityReport rel = rating_reliability(
        ratings, cfg.reliability_splits, mix_seed(cfg.seed, 0x72656cULL, 0));
    report.ceiling_mean = rel.mean_sb;
    report.ceiling_sem = rel.sem_sb;
    for (const auto& [sc, res] : rel.per_scenario)
      report.ceiling_per_scenario.emplace_back(to_string(sc),
                                               res.spearman_brown);

    // Single predictors, all under byte-identical split memberships.
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    auto eval_single = [&](const std::string& name, const std::string& kind) {
      IrfScore s;
      s.name = name;
      s.kind = kind;
      Eigen::MatrixXd X(n, 1);
      X.col(0) =
          Eigen::Map<const Eigen::VectorXd>(cols.at(name).data(), n);
      try {
        SplitEval ev =
            evaluate_splits(X, yv, 0.0, cfg.n_splits, cfg.split_seed);
        s.mean_r = ev.mean_r;
        s.sem_r = ev.sem_r;
        s.pooled_r = ev.pooled_r;
      } catch (const std::invalid_argument&) {
        // Degenerate column (e.g., a constant feature); reported as 0.
      }
      return s;
    };
    std::vector<std::string> irf_cols;
    for (const auto& name : {std::string("adversarial"),
                             std::string("disagreement"), std::string("rnd")})
      if (cols.count(name)) irf_cols.push_back(name);
    for (long d : cfg.delta_grid) {
      const std::string name = "delta_progress_" + std::to_string(d);
      if (cols.count(name)) irf_cols.push_back(name);
    }
    for (const auto& name : irf_cols)
      report.singles.push_back(eval_single(name, "irf"));
    for (const auto& f : feature_catalog())
      report.singles.push_back(eval_single(f, "feature"));

    // Stability across k at the final checkpoint.
    const long final_step = cfg.schedule.checkpoint_steps.back();
    for (int k : cfg.k_grid) {
      for (const std::string fam :
           {std::string("adversarial"), std::string("disagreement")}) {
        auto by_id = table.column(fam, final_step, k);
        if (by_id.empty()) continue;
        std::vector<double> col;
        for (const auto& id : ids) col.push_back(by_id.at(id));
        IrfScore s;
        s.name = fam + "@k" + std::to_string(k);
        s.kind = "irf";
        Eigen::MatrixXd X(n, 1);
        X.col(0) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
        SplitEval ev =
            evaluate_splits(X, yv, 0.0, cfg.n_splits, cfg.split_seed);
        s.mean_r = ev.mean_r;
        s.sem_r = ev.sem_r;
        s.pooled_r = ev.pooled_r;
        report.per_k.push_back(s);
      }
      if (cols.count("rnd")) {
        IrfScore s = eval_single("rnd", "irf");
        s.name = "rnd@k" + std::to_string(k);
        report.per_k.push_back(s);
      }
    }

    // Composite over the scene features: LOO-selected lambda, evaluated on
    // the shared splits.
    {
      const auto& names = feature_catalog();
      Eigen::MatrixXd X(n, static_cast<Eigen::Index>(names.size()));
      for (std::size_t f = 0; f < names.size(); ++f)
        X.col(static_cast<Eigen::Index>(f)) =
            Eigen::Map<const Eigen::VectorXd>(cols.at(names[f]).data(), n);
      const auto grid = lasso_lambda_grid(X, yv);
      report.composite_lambda = loo_select_lambda(X, yv, grid).lambda;
      LassoFit fit = lasso_fit(X, yv, report.composite_lambda);
      for (std::size_t f = 0; f < names.size(); ++f)
        if (fit.beta[static_cast<Eigen::Index>(f)] != 0.0)
          report.composite_coefs.emplace_back(
              names[f], fit.beta[static_cast<Eigen::Index>(f)]);
      SplitEval ev = evaluate_splits(X, yv, report.composite_lambda,
                                     cfg.n_splits, cfg.split_seed);
      report.composite = {"composite_features", "composite", ev.mean_r,
                          ev.sem_r, ev.pooled_r};
    }

    // Per-scenario generalization matrix over the single predictors.
    {
      std::vector<std::string> names;
      std::vector<std::vector<double>> preds;
      for (const auto& s : report.singles) {
        names.push_back(s.name);
        preds.push_back(cols.at(s.name));
      }
      report.matrix = per_scenario_matrix(names, preds, y, scenario_of);
    }

    // Complementarity to the adversarial base among the scene features.
    if (cols.count("adversarial")) {
      std::vector<std::string> names = {"adversarial"};
      std::vector<std::vector<double>> preds = {cols.at("adversarial")};
      for (const auto& f : feature_catalog()) {
        names.push_back(f);
        preds.push_back(cols.at(f));
      }
      report.complementarity = complementarity(
          "adversarial", names, preds, y, cfg.n_splits, cfg.split_seed);
    }

    // Train-split adversarial trend.
    {
      std::ifstream is(train_adv_path(cfg));
      if (!is) throw std::runtime_error("missing " + train_adv_path(cfg));
      std::string line;
      std::getline(is, line);  // hash comment
      if (line != "# config_hash=" + cfg.hash())
        throw std::runtime_error("train_adversarial.csv hash mismatch");
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        report.train_adv_by_ckpt.emplace_back(
            std::stol(line.substr(0, comma)),
            std::stod(line.substr(comma + 1)));
      }
    }

    std::ofstream os(report_json_path(cfg), std::ios::binary);
    os << report.to_json() << "\n";
    if (!os) throw std::runtime_error("failed to write report.json");
    log_line(log, "fit: " + std::to_string(report.singles.size()) +
                      " single predictors, composite lambda " +
                      fmt_g(report.composite_lambda));
  });
  return report;
}

// ---- report rendering ------------------------------------------------------

namespace {

std::string fmt_svg(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Horizontal-bar chart of mean r with SEM error bars and a dashed noise
// ceiling, one bar per entry.
std::string render_bar_svg(const std::string& title,
                           const std::vector<IrfScore>& entries,
                           double ceiling, const std::string& hash) {
  const double bar_h = 18, gap = 6, left = 170, width = 360, top = 40;
  const double height = top + entries.size() * (bar_h + gap) + 30;
  double max_r = ceiling;
  for (const auto& e : entries) max_r = std::max(max_r, e.mean_r + e.sem_r);
  max_r = std::max(max_r, 0.1);
  auto x_of = [&](double r) { return left + std::max(0.0, r) / max_r * width; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
    << fmt_svg(left + width + 40) << "\" height=\"" << fmt_svg(height)
    << "\">\n";
  s << "<!-- config_hash=" << hash << " -->\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">"
    << title << "</text>\n";
  double ypos = top;
  for (const auto& e : entries) {
    s << "<text x=\"5\" y=\"" << fmt_svg(ypos + bar_h - 5)
      << "\" font-size=\"11\" font-family=\"monospace\">" << e.name
      << "</text>\n";
    const double w = x_of(e.mean_r) - left;
    s << "<rect x=\"" << fmt_svg(left) << "\" y=\"" << fmt_svg(ypos)
      << "\" width=\"" << fmt_svg(std::max(0.0, w)) << "\" height=\""
      << fmt_svg(bar_h) << "\" fill=\"#4878a8\"/>\n";
    const double cy = ypos + bar_h / 2;
    s << "<line x1=\"" << fmt_svg(x_of(e.mean_r - e.sem_r)) << "\" y1=\""
      << fmt_svg(cy) << "\" x2=\"" << fmt_svg(x_of(e.mean_r + e.sem_r))
      << "\" y2=\"" << fmt_svg(cy) << "\" stroke=\"#202020\"/>\n";
    ypos += bar_h + gap;
  }
  s << "<line x1=\"" << fmt_svg(x_of(ceiling)) << "\" y1=\"" << fmt_svg(top - 8)
    << "\" x2=\"" << fmt_svg(x_of(ceiling)) << "\" y2=\"" << fmt_svg(ypos)
    << "\" stroke=\"#b03030\" stroke-dasharray=\"5,3\"/>\n";
  s << "<text x=\"" << fmt_svg(x_of(ceiling) + 4) << "\" y=\""
    << fmt_svg(top - 12)
    << "\" font-size=\"10\" fill=\"#b03030\" font-family=\"sans-serif\">"
       "ceiling "
    << fmt_svg(ceiling) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string render_matrix_svg(const ScenarioMatrix& m,
                              const std::string& hash) {
  const double cell = 26, left = 170, top = 60;
  const double width = left + m.scenarios.size() * cell + 40;
  const double height = top + m.predictor_names.size() * cell + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_svg(width)
    << "\" height=\"" << fmt_svg(height) << "\">\n";
  s << "<!-- config_hash=" << hash << " -->\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">"
       "Per-scenario correlation (red + / blue -)</text>\n";
  for (std::size_t c = 0; c < m.scenarios.size(); ++c)
    s << "<text x=\"" << fmt_svg(left + c * cell + 4) << "\" y=\""
      << fmt_svg(top - 6) << "\" font-size=\"9\" font-family=\"monospace\" "
         "transform=\"rotate(-45 "
      << fmt_svg(left + c * cell + 4) << " " << fmt_svg(top - 6) << ")\">"
      << to_string(m.scenarios[c]) << "</text>\n";
  for (std::size_t r = 0; r < m.predictor_names.size(); ++r) {
    const double ypos = top + r * cell;
    s << "<text x=\"5\" y=\"" << fmt_svg(ypos + cell - 8)
      << "\" font-size=\"10\" font-family=\"monospace\">"
      << m.predictor_names[r] << "</text>\n";
    for (std::size_t c = 0; c < m.scenarios.size(); ++c) {
      const ScenarioCell& cellv = m.cells[r][c];
      std::string fill = "#d8d8d8";
      if (!cellv.degenerate) {
        const int shade =
            static_cast<int>(std::min(1.0, std::abs(cellv.r)) * 200);
        char buf[16];
        if (cellv.r >= 0)
          std::snprintf(buf, sizeof(buf), "#%02xd0%02x", 208 - shade,
                        208 - shade);
        else
          std::snprintf(buf, sizeof(buf), "#%02x%02xd0", 208 - shade,
                        208 - shade);
        fill = buf;
      }
      s << "<rect x=\"" << fmt_svg(left + c * cell) << "\" y=\""
        << fmt_svg(ypos) << "\" width=\"" << fmt_svg(cell - 2)
        << "\" height=\"" << fmt_svg(cell - 2) << "\" fill=\"" << fill
        << "\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::string EvalReport::to_json() const {
  ordered_json j;
  j["config_hash"] = config_hash;
  j["target"] = "raw mean ratings";  // regression target convention
  j["ceiling"]["mean_sb"] = ceiling_mean;
  j["ceiling"]["sem_sb"] = ceiling_sem;
  for (const auto& [name, v] : ceiling_per_scenario)
    j["ceiling"]["per_scenario"][name] = v;
  for (const auto& s : singles) j["singles"].push_back(score_to_json(s));
  for (const auto& s : per_k) j["per_k"].push_back(score_to_json(s));
  j["composite"] = score_to_json(composite);
  j["composite"]["lambda"] = composite_lambda;
  for (const auto& [name, v] : composite_coefs)
    j["composite"]["coefficients"][name] = v;
  ordered_json m;
  for (Scenario sc : matrix.scenarios) m["scenarios"].push_back(to_string(sc));
  for (std::size_t r = 0; r < matrix.predictor_names.size(); ++r) {
    ordered_json row;
    row["name"] = matrix.predictor_names[r];
    row["sign_consistent"] = static_cast<bool>(matrix.sign_consistent[r]);
    for (const auto& c : matrix.cells[r]) {
      ordered_json cell;
      cell["r"] = c.r;
      cell["n"] = c.n;
      cell["degenerate"] = c.degenerate;
      row["cells"].push_back(cell);
    }
    m["rows"].push_back(row);
  }
  j["per_scenario_matrix"] = m;
  for (const auto& e : complementarity) {
    ordered_json c;
    c["feature"] = e.feature;
    c["mean_r"] = e.mean_r;
    c["sem_r"] = e.sem_r;
    c["base_r"] = e.base_r;
    j["complementarity"].push_back(c);
  }
  for (const auto& [step, v] : train_adv_by_ckpt) {
    ordered_json t;
    t["ckpt_step"] = step;
    t["mean_adversarial_total"] = v;
    j["train_adversarial"].push_back(t);
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  EvalReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.ceiling_mean = j.at("ceiling").at("mean_sb").get<double>();
  r.ceiling_sem = j.at("ceiling").at("sem_sb").get<double>();
  if (j.at("ceiling").contains("per_scenario"))
    for (const auto& [name, v] : j.at("ceiling").at("per_scenario").items())
      r.ceiling_per_scenario.emplace_back(name, v.get<double>());
  if (j.contains("singles"))
    for (const auto& s : j.at("singles")) r.singles.push_back(score_from_json(s));
  if (j.contains("per_k"))
    for (const auto& s : j.at("per_k")) r.per_k.push_back(score_from_json(s));
  r.composite = score_from_json(j.at("composite"));
  r.composite_lambda = j.at("composite").at("lambda").get<double>();
  if (j.at("composite").contains("coefficients"))
    for (const auto& [name, v] : j.at("composite").at("coefficients").items())
      r.composite_coefs.emplace_back(name, v.get<double>());
  const auto& m = j.at("per_scenario_matrix");
  if (m.contains("scenarios"))
    for (const auto& sc : m.at("scenarios"))
      r.matrix.scenarios.push_back(scenario_from_string(sc.get<std::string>()));
  if (m.contains("rows"))
    for (const auto& row : m.at("rows")) {
      r.matrix.predictor_names.push_back(row.at("name").get<std::string>());
      r.matrix.sign_consistent.push_back(row.at("sign_consistent").get<bool>());
      std::vector<ScenarioCell> cells;
      for (const auto& c : row.at("cells")) {
        ScenarioCell cell;
        cell.r = c.at("r").get<double>();
        cell.n = c.at("n").get<int>();
        cell.degenerate = c.at("degenerate").get<bool>();
        cells.push_back(cell);
      }
      r.matrix.cells.push_back(std::move(cells));
    }
  if (j.contains("complementarity"))
    for (const auto& c : j.at("complementarity")) {
      ComplementarityEntry e;
      e.feature = c.at("feature").get<std::string>();
      e.mean_r = c.at("mean_r").get<double>();
      e.sem_r = c.at("sem_r").get<double>();
      e.base_r = c.at("base_r").get<double>();
      r.complementarity.push_back(e);
    }
  if (j.contains("train_adversarial"))
    for (const auto& t : j.at("train_adversarial"))
      r.train_adv_by_ckpt.emplace_back(
          t.at("ckpt_step").get<long>(),
          t.at("mean_adversarial_total").get<double>());
  return r;
}

void stage_report(const PipelineConfig& cfg, std::ostream* log) {
  rethrow_with_stage("report", [&] {
    cfg.validate();
    check_manifest(cfg);
    std::ifstream is(report_json_path(cfg));
    if (!is) throw std::runtime_error("missing report.json; run fit first");
    std::stringstream ss;
    ss << is.rdbuf();
    const EvalReport rep = EvalReport::from_json(ss.str());
    if (rep.config_hash != cfg.hash())
      throw std::runtime_error("report.json was written under hash " +
                               rep.config_hash + ", refusing to mix with " +
                               cfg.hash());

    // CSV mirror: every number in the JSON, one row per value group.
    std::ostringstream csv;
    csv << "# config_hash=" << rep.config_hash << "\n";
    csv << "section,name,value1,value2,value3\n";
    csv << "ceiling,overall," << fmt_g(rep.ceiling_mean) << ","
        << fmt_g(rep.ceiling_sem) << ",\n";
    for (const auto& [name, v] : rep.ceiling_per_scenario)
      csv << "ceiling_scenario," << name << "," << fmt_g(v) << ",,\n";
    for (const auto& s : rep.singles)
      csv << "single," << s.name << "," << fmt_g(s.mean_r) << ","
          << fmt_g(s.sem_r) << "," << fmt_g(s.pooled_r) << "\n";
    for (const auto& s : rep.per_k)
      csv << "per_k," << s.name << "," << fmt_g(s.mean_r) << ","
          << fmt_g(s.sem_r) << "," << fmt_g(s.pooled_r) << "\n";
    csv << "composite," << rep.composite.name << ","
        << fmt_g(rep.composite.mean_r) << "," << fmt_g(rep.composite.sem_r)
        << "," << fmt_g(rep.composite.pooled_r) << "\n";
    csv << "composite_lambda,lambda," << fmt_g(rep.composite_lambda) << ",,\n";
    for (const auto& [name, v] : rep.composite_coefs)
      csv << "composite_coef," << name << "," << fmt_g(v) << ",,\n";
    for (std::size_t r = 0; r < rep.matrix.predictor_names.size(); ++r)
      for (std::size_t c = 0; c < rep.matrix.scenarios.size(); ++c) {
        const auto& cell = rep.matrix.cells[r][c];
        csv << "matrix," << rep.matrix.predictor_names[r] << "/"
            << to_string(rep.matrix.scenarios[c]) << ","
            << (cell.degenerate ? "degenerate" : fmt_g(cell.r)) << ","
            << cell.n << "," << (rep.matrix.sign_consistent[r] ? "consistent"
                                                               : "mixed")
            << "\n";
      }
    for (const auto& e : rep.complementarity)
      csv << "complementarity," << e.feature << "," << fmt_g(e.mean_r) << ","
          << fmt_g(e.sem_r) << "," << fmt_g(e.base_r) << "\n";
    for (const auto& [step, v] : rep.train_adv_by_ckpt)
      csv << "train_adversarial," << step << "," << fmt_g(v) << ",,\n";
    write_text(report_csv_path(cfg), csv.str());

    // Figures.
    std::vector<IrfScore> irf_bars;
    for (const auto& s : rep.singles)
      if (s.kind == "irf") irf_bars.push_back(s);
    irf_bars.push_back(rep.composite);
    write_text((fs::path(cfg.out_dir) / "fig_single_irf.svg").string(),
               render_bar_svg("Cross-scenario correlation by IRF", irf_bars,
                              rep.ceiling_mean, rep.config_hash));
    write_text((fs::path(cfg.out_dir) / "fig_scenario_matrix.svg").string(),
               render_matrix_svg(rep.matrix, rep.config_hash));
    std::vector<IrfScore> comp_bars;
    for (std::size_t i = 0; i < rep.complementarity.size() && i < 10; ++i) {
      const auto& e = rep.complementarity[i];
      comp_bars.push_back({e.feature, "feature", e.mean_r, e.sem_r, 0.0});
    }
    write_text((fs::path(cfg.out_dir) / "fig_complementarity.svg").string(),
               render_bar_svg("Complement to adversarial (pair mean r)",
                              comp_bars, rep.ceiling_mean, rep.config_hash));
    log_line(log, "report: wrote CSV and 3 figures");
  });
}

EvalReport run_pipeline(const PipelineConfig& cfg, std::ostream* log) {
  cfg.validate();
  stage_generate(cfg, log);
  stage_train(cfg, log);
  stage_score(cfg, log);
  stage_ratings(cfg, log);
  EvalReport report = stage_fit(cfg, log);
  stage_report(cfg, log);
  return report;
}

}  // namespace curiolab
