#include "curiolab/irf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace curiolab {
namespace {

void finalize(RewardSeries& s) {
  s.total = 0.0;
  for (double r : s.per_step) s.total += r;
}

void check_k(int k, const Trajectory& traj) {
  if (k < 1 || k > 4)
    throw std::invalid_argument("rollout horizon k must be in [1, 4]");
  if (traj.length() <= k)
    throw std::invalid_argument("trajectory shorter than rollout horizon");
}

std::uint64_t mix_fingerprint(std::uint64_t base, long step, int k) {
  std::uint64_t h = fnv1a(&base, sizeof(base));
  h = fnv1a(&step, sizeof(step), h);
  h = fnv1a(&k, sizeof(k), h);
  return h;
}

struct RunningStats {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  double sum_sq = 0.0;
  long n = 0;

  void add(double x) {
    min = std::min(min, x);
    max = std::max(max, x);
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  // Sample variance, divisor n-1.
  double variance() const {
    if (n < 2) return 0.0;
    return (sum_sq - sum * sum / n) / (n - 1);
  }
};

}  // namespace

double total_ir(const RewardSeries& series) {
  double sum = 0.0;
  for (double r : series.per_step) sum += r;
  return sum;
}

const std::vector<std::string>& feature_catalog() {
  static const std::vector<std::string> kCatalog = {
      "position_mean",            "position_variance",
      "position_min",             "position_max",
      "velocity_mean",            "velocity_variance",
      "velocity_min",             "velocity_max",
      "position_covtrace_initial", "position_covtrace_mean",
      "position_covtrace_min",    "position_covtrace_max",
      "velocity_covtrace_initial", "velocity_covtrace_mean",
      "velocity_covtrace_min",    "velocity_covtrace_max",
      "collision_total",          "collision_initial",
      "collision_mean",           "collision_min",
      "collision_max",            "n_objects",
      "n_categories",             "n_distractors"};
  return kCatalog;
}

double FeatureVector::at(const std::string& name) const {
  const auto& cat = feature_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i)
    if (cat[i] == name) return values.at(i);
  throw std::invalid_argument("unknown feature: " + name);
}

FeatureVector scene_features(const Trajectory& traj, int bins) {
  if (traj.states.empty())
    throw std::invalid_argument("scene_features: empty trajectory");
  if (bins < 1) throw std::invalid_argument("scene_features: bins must be >= 1");

  const int T = traj.length();
  std::vector<int> object_ids;
  for (const auto& o : traj.objects) object_ids.push_back(o.object_id);

  RunningStats pos, vel;
  RunningStats pos_trace, vel_trace;
  double pos_trace_initial = 0.0, vel_trace_initial = 0.0;

  for (int t = 0; t < T; ++t) {
    const SceneState& s = traj.states[t];
    RunningStats axis_pos[3], axis_vel[3];
    for (int id : object_ids) {
      const Vec3 c = object_centroid(s, id);
      const Vec3 v = object_mean_velocity(s, id);
      for (int a = 0; a < 3; ++a) {
        pos.add(c[a]);
        vel.add(v[a]);
        axis_pos[a].add(c[a]);
        axis_vel[a].add(v[a]);
      }
    }
    const double tp =
        axis_pos[0].variance() + axis_pos[1].variance() + axis_pos[2].variance();
    const double tv =
        axis_vel[0].variance() + axis_vel[1].variance() + axis_vel[2].variance();
    if (t == 0) {
      pos_trace_initial = tp;
      vel_trace_initial = tv;
    }
    pos_trace.add(tp);
    vel_trace.add(tv);
  }

  // Collision statistics over the stored event table.
  const double collision_total = static_cast<double>(traj.collisions.size());
  std::set<std::pair<int, int>> initial_pairs;
  std::map<std::pair<int, int>, std::set<int>> frames_of_pair;
  for (const auto& ev : traj.collisions) {
    const auto key = std::make_pair(std::min(ev.object_a, ev.object_b),
                                    std::max(ev.object_a, ev.object_b));
    frames_of_pair[key].insert(ev.time_index);
    if (ev.time_index == 0) initial_pairs.insert(key);
  }
  // Pairs in contact at frame 0 that separate at some later frame.
  int collision_initial = 0;
  for (const auto& key : initial_pairs) {
    const auto& frames = frames_of_pair[key];
    bool separates = false;
    for (int t = 1; t < T; ++t)
      if (!frames.count(t)) {
        separates = true;
        break;
      }
    if (separates) ++collision_initial;
  }
  RunningStats per_bin;
  for (int b = 0; b < bins; ++b) {
    const int lo = static_cast<int>(static_cast<long>(b) * T / bins);
    const int hi = static_cast<int>(static_cast<long>(b + 1) * T / bins);
    int count = 0;
    for (const auto& ev : traj.collisions)
      if (ev.time_index >= lo && ev.time_index < hi) ++count;
    per_bin.add(static_cast<double>(count));
  }

  std::set<Category> categories;
  int distractors = 0;
  for (const auto& o : traj.objects) {
    categories.insert(o.category);
    if (o.is_distractor) ++distractors;
  }

  FeatureVector fv;
  fv.values = {pos.mean(),
               pos.variance(),
               pos.min,
               pos.max,
               vel.mean(),
               vel.variance(),
               vel.min,
               vel.max,
               pos_trace_initial,
               pos_trace.mean(),
               pos_trace.min,
               pos_trace.max,
               vel_trace_initial,
               vel_trace.mean(),
               vel_trace.min,
               vel_trace.max,
               collision_total,
               static_cast<double>(collision_initial),
               per_bin.mean(),
               per_bin.min,
               per_bin.max,
               static_cast<double>(traj.objects.size()),
               static_cast<double>(categories.size()),
               static_cast<double>(distractors)};
  return fv;
}

// ---------------------------------------------------------------------------
// RND
// ---------------------------------------------------------------------------

Eigen::VectorXd RndPair::embed(const Mlp& net, const SceneState& state) const {
  const Eigen::MatrixXd z = norm.normalize(WorldModel::state_features(state));
  Eigen::MatrixXd x(2 * WorldModel::kFeatures, z.cols());
  x.topRows(WorldModel::kFeatures) = z;
  x.bottomRows(WorldModel::kFeatures) =
      z.rowwise().mean().replicate(1, z.cols());
  return net.forward(x).rowwise().mean();
}

RndPair rnd_init(std::uint64_t seed_target, std::uint64_t seed_predictor,
                 int embed_dim, const Normalizer& norm, const RndConfig& cfg) {
  if (seed_target == seed_predictor)
    throw std::invalid_argument("rnd_init: target and predictor seeds equal");
  if (embed_dim < 1)
    throw std::invalid_argument("rnd_init: embed_dim must be >= 1");
  MlpArch arch;
  arch.input_dim = 2 * WorldModel::kFeatures;
  arch.hidden = cfg.hidden;
  arch.output_dim = embed_dim;
  RndPair pair;
  Rng rt(fnv1a(&seed_target, sizeof(seed_target)));
  Rng rp(fnv1a(&seed_predictor, sizeof(seed_predictor)));
  pair.target = Mlp(arch, rt);
  pair.predictor = Mlp(arch, rp);
  pair.norm = norm;
  pair.embed_dim = embed_dim;
  pair.seed_target = seed_target;
  pair.seed_predictor = seed_predictor;
  return pair;
}

std::vector<LayerGrad> rnd_batch_gradient(const RndPair& pair,
                                          const std::vector<SceneState>& states,
                                          const std::vector<int>& batch,
                                          double* loss_out) {
  if (batch.empty()) throw std::invalid_argument("rnd gradient: empty batch");
  std::vector<LayerGrad> grads = pair.predictor.zero_grads();
  std::vector<Eigen::MatrixXd> acts;
  const long n_components =
      static_cast<long>(batch.size()) * pair.embed_dim;
  double loss = 0.0;
  for (int idx : batch) {
    const SceneState& st = states.at(static_cast<std::size_t>(idx));
    const Eigen::MatrixXd z =
        pair.norm.normalize(WorldModel::state_features(st));
    Eigen::MatrixXd x(2 * WorldModel::kFeatures, z.cols());
    x.topRows(WorldModel::kFeatures) = z;
    x.bottomRows(WorldModel::kFeatures) =
        z.rowwise().mean().replicate(1, z.cols());
    const Eigen::VectorXd t = pair.target.forward(x).rowwise().mean();
    const Eigen::MatrixXd out = pair.predictor.forward_cached(x, acts);
    const Eigen::VectorXd p = out.rowwise().mean();
    loss += (p - t).squaredNorm() / static_cast<double>(n_components);
    // MSE over embedding components; output pooling spreads the gradient
    // uniformly over particles.
    const Eigen::VectorXd d_embed =
        (2.0 / static_cast<double>(n_components)) * (p - t);
    const Eigen::MatrixXd d_out =
        d_embed.replicate(1, out.cols()) / static_cast<double>(out.cols());
    pair.predictor.backward(acts, d_out, grads);
  }
  if (loss_out) *loss_out = loss;
  return grads;
}

void rnd_train(RndPair& pair, const std::vector<SceneState>& states, int steps,
               double lr) {
  if (steps < 0) throw std::invalid_argument("rnd_train: steps must be >= 0");
  if (states.empty()) throw std::invalid_argument("rnd_train: empty dataset");
  const int batch_size = 32;
  // Continuing calls draw fresh batches from a stream keyed by progress.
  for (int s = 0; s < steps; ++s) {
    std::uint64_t tick = static_cast<std::uint64_t>(pair.train_steps);
    Rng rng(fnv1a(&tick, sizeof(tick),
                  fnv1a(&pair.seed_predictor, sizeof(pair.seed_predictor))));
    std::vector<int> batch;
    for (int b = 0; b < batch_size; ++b)
      batch.push_back(rng.uniform_int(0, static_cast<int>(states.size()) - 1));
    std::vector<LayerGrad> grads = rnd_batch_gradient(pair, states, batch);
    pair.opt.step(pair.predictor, grads, lr);
    ++pair.train_steps;
  }
}

RewardSeries rnd_reward(const RndPair& pair, const Trajectory& traj) {
  if (pair.embed_dim < 1)
    throw std::invalid_argument("rnd_reward: uninitialized pair");
  RewardSeries series;
  series.trajectory_id = traj.id();
  series.irf_name = "rnd";
  series.params_fingerprint = mix_fingerprint(
      fnv1a(pair.target.weights[0].data(),
            pair.target.weights[0].size() * sizeof(double)),
      pair.train_steps, 0);
  for (const SceneState& s : traj.states) {
    const Eigen::VectorXd t = pair.embed(pair.target, s);
    const Eigen::VectorXd p = pair.embed(pair.predictor, s);
    series.per_step.push_back(
        std::sqrt((t - p).squaredNorm() / static_cast<double>(t.size())));
  }
  finalize(series);
  return series;
}

// ---------------------------------------------------------------------------
// WM-based IRFs
// ---------------------------------------------------------------------------

RewardSeries adversarial_reward(const Checkpoint& ckpt, const Trajectory& traj,
                                int k) {
  check_k(k, traj);
  RewardSeries series;
  series.trajectory_id = traj.id();
  series.irf_name = "adversarial";
  series.params_fingerprint =
      mix_fingerprint(ckpt.params.is_oracle() ? 0
                                              : ckpt.params.weights_fingerprint(),
                      ckpt.step, k);
  for (int t = 0; t + k < traj.length(); ++t)
    series.per_step.push_back(
        ckpt.params.loss(traj.states[t], traj.states[t + k], k));
  finalize(series);
  return series;
}

RewardSeries disagreement_reward(const std::vector<Checkpoint>& ensemble,
                                 const Trajectory& traj, int k) {
  if (ensemble.size() < 2)
    throw std::invalid_argument("disagreement: ensemble size must be >= 2");
  check_k(k, traj);
  const double n = static_cast<double>(ensemble.size());
  RewardSeries series;
  series.trajectory_id = traj.id();
  series.irf_name = "disagreement";
  std::uint64_t fp = 0;
  for (const auto& c : ensemble)
    fp = fnv1a(&c.step, sizeof(c.step),
               c.params.is_oracle() ? fp : c.params.weights_fingerprint() ^ fp);
  series.params_fingerprint = mix_fingerprint(fp, ensemble.front().step, k);

  for (int t = 0; t + k < traj.length(); ++t) {
    Eigen::MatrixXd preds;  // components x members
    for (std::size_t m = 0; m < ensemble.size(); ++m) {
      const SceneState p = ensemble[m].params.rollout(traj.states[t], k);
      const Eigen::MatrixXd f = WorldModel::state_features(p);
      if (preds.size() == 0)
        preds.resize(f.size(), static_cast<Eigen::Index>(ensemble.size()));
      preds.col(static_cast<Eigen::Index>(m)) =
          Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
    }
    const Eigen::VectorXd mean = preds.rowwise().mean();
    const double var_sum =
        (preds.colwise() - mean).array().square().sum() / (n - 1.0);
    series.per_step.push_back(var_sum / static_cast<double>(preds.rows()));
  }
  finalize(series);
  return series;
}

RewardSeries delta_progress_reward(const Checkpoint& old_ckpt,
                                   const Checkpoint& new_ckpt,
                                   const Trajectory& traj, int k) {
  if (old_ckpt.step > new_ckpt.step)
    throw std::invalid_argument("delta_progress: old checkpoint is newer");
  if (!old_ckpt.params.is_oracle() && !new_ckpt.params.is_oracle() &&
      !old_ckpt.params.net.same_shape(new_ckpt.params.net))
    throw std::invalid_argument("delta_progress: architecture mismatch");
  check_k(k, traj);
  RewardSeries series;
  series.trajectory_id = traj.id();
  series.irf_name = "delta_progress";
  series.params_fingerprint = mix_fingerprint(
      (old_ckpt.params.is_oracle() ? 0 : old_ckpt.params.weights_fingerprint()) ^
          (new_ckpt.params.is_oracle() ? 0
                                       : new_ckpt.params.weights_fingerprint()),
      new_ckpt.step - old_ckpt.step, k);
  for (int t = 0; t + k < traj.length(); ++t)
    series.per_step.push_back(
        old_ckpt.params.loss(traj.states[t], traj.states[t + k], k) -
        new_ckpt.params.loss(traj.states[t], traj.states[t + k], k));
  finalize(series);
  return series;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::map<std::string, double> IrTable::column(const std::string& irf,
                                              long ckpt_step, int k) const {
  std::map<std::string, double> out;
  for (const auto& row : rows)
    if (row.irf == irf && row.ckpt_step == ckpt_step && row.k == k)
      out[row.trajectory_id] = row.total_ir;
  return out;
}

std::vector<std::string> IrTable::irf_names() const {
  std::vector<std::string> names;
  for (const auto& row : rows)
    if (std::find(names.begin(), names.end(), row.irf) == names.end())
      names.push_back(row.irf);
  return names;
}

IrTable sweep(const std::vector<std::vector<Checkpoint>>& ensembles,
              const std::vector<std::pair<long, RndPair>>& rnd_checkpoints,
              const std::vector<int>& k_grid,
              const std::vector<long>& delta_grid,
              const std::vector<Trajectory>& trajectories, int bins) {
  if (ensembles.empty() || ensembles.front().empty())
    throw std::invalid_argument("sweep: empty checkpoint grid");
  if (k_grid.empty()) throw std::invalid_argument("sweep: empty k grid");
  const auto& grid = ensembles.front();
  const long max_step = grid.back().step;
  for (long d : delta_grid)
    if (d > max_step)
      throw std::invalid_argument("sweep: delta exceeds max checkpoint step");
  for (const auto& ens : ensembles)
    if (ens.size() != grid.size())
      throw std::invalid_argument("sweep: ensembles have unequal grids");

  auto find_step = [&](long step) -> int {
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (grid[i].step == step) return static_cast<int>(i);
    return -1;
  };

  IrTable table;
  for (const Trajectory& traj : trajectories) {
    const std::string id = traj.id();
    table.features[id] = scene_features(traj, bins);
    table.scenario_of[id] = traj.scenario;

    for (const auto& [step, pair] : rnd_checkpoints) {
      const RewardSeries s = rnd_reward(pair, traj);
      table.rows.push_back({id, traj.scenario, "rnd", step, 0, s.total});
    }

    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
      const long step = grid[ci].step;
      for (int k : k_grid) {
        const RewardSeries adv = adversarial_reward(grid[ci], traj, k);
        table.rows.push_back(
            {id, traj.scenario, "adversarial", step, k, adv.total});
        if (ensembles.size() >= 2) {
          std::vector<Checkpoint> members;
          for (const auto& ens : ensembles) members.push_back(ens[ci]);
          const RewardSeries dis = disagreement_reward(members, traj, k);
          table.rows.push_back(
              {id, traj.scenario, "disagreement", step, k, dis.total});
        }
        for (long d : delta_grid) {
          const int old_idx = find_step(step - d);
          if (step < d || old_idx < 0) continue;
          const RewardSeries dp =
              delta_progress_reward(grid[old_idx], grid[ci], traj, k);
          table.rows.push_back({id, traj.scenario,
                                "delta_progress_" + std::to_string(d), step, k,
                                dp.total});
        }
      }
    }
  }
  return table;
}

void write_ir_table_csv(const IrTable& table, const std::string& path,
                        const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os << "# config_hash=" << config_hash << "\n";
  os << "trajectory_id,scenario,irf,ckpt_step,k,total_ir";
  for (const auto& name : feature_catalog()) os << "," << name;
  os << "\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : table.rows) {
    os << row.trajectory_id << "," << to_string(row.scenario) << "," << row.irf
       << "," << row.ckpt_step << "," << row.k << "," << fmt(row.total_ir);
    for (double v : table.features.at(row.trajectory_id).values)
      os << "," << fmt(v);
    os << "\n";
  }
}

IrTable read_ir_table_csv(const std::string& path, std::string* config_hash) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("# config_hash=", 0) != 0)
    throw std::runtime_error("missing config_hash header in " + path);
  if (config_hash) *config_hash = line.substr(std::string("# config_hash=").size());
  if (!std::getline(is, line))
    throw std::runtime_error("missing column header in " + path);

  IrTable table;
  const std::size_t n_features = feature_catalog().size();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6 + n_features)
      throw std::runtime_error("malformed row in " + path + ": " + line);
    IrRow row;
    row.trajectory_id = fields[0];
    row.scenario = scenario_from_string(fields[1]);
    row.irf = fields[2];
    row.ckpt_step = std::stol(fields[3]);
    row.k = std::stoi(fields[4]);
    row.total_ir = std::stod(fields[5]);
    table.rows.push_back(row);
    if (!table.features.count(row.trajectory_id)) {
      FeatureVector fv;
      for (std::size_t i = 0; i < n_features; ++i)
        fv.values.push_back(std::stod(fields[6 + i]));
      table.features[row.trajectory_id] = fv;
      table.scenario_of[row.trajectory_id] = row.scenario;
    }
  }
  return table;
}

}  // namespace curiolab
