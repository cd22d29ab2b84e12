#pragma once

#include <map>
#include <string>
#include <vector>

#include "curiolab/wm.hpp"

namespace curiolab {

// Per-timestep intrinsic rewards for one trajectory under one IRF.
struct RewardSeries {
  std::string trajectory_id;
  std::string irf_name;
  std::vector<double> per_step;
  double total = 0.0;
  std::uint64_t params_fingerprint = 0;
};

double total_ir(const RewardSeries& series);

// Fixed, ordered scene-feature catalog.
const std::vector<std::string>& feature_catalog();

struct FeatureVector {
  std::vector<double> values;  // aligned with feature_catalog()
  double at(const std::string& name) const;
};

// Trajectory statistics requiring no world model: position/velocity moments,
// centroid covariance traces, collision counts, object counts.
FeatureVector scene_features(const Trajectory& traj, int bins = 10);

// ---------------------------------------------------------------------------
// Random network distillation
// ---------------------------------------------------------------------------

struct RndConfig {
  std::vector<int> hidden = {64, 64};
  int embed_dim = 32;
  int batch_size = 32;
};

// Frozen random target embedding net plus a trainable predictor of it.
struct RndPair {
  Mlp target;
  Mlp predictor;
  Normalizer norm;  // shared with the world model input normalization
  int embed_dim = 0;
  std::uint64_t seed_target = 0;
  std::uint64_t seed_predictor = 0;
  long train_steps = 0;
  AdamState opt;

  Eigen::VectorXd embed(const Mlp& net, const SceneState& state) const;
};

RndPair rnd_init(std::uint64_t seed_target, std::uint64_t seed_predictor,
                 int embed_dim, const Normalizer& norm,
                 const RndConfig& cfg = {});
// Full predictor gradient of the batch MSE toward the frozen target
// embeddings, in the layer layout of the predictor net.
std::vector<LayerGrad> rnd_batch_gradient(const RndPair& pair,
                                          const std::vector<SceneState>& states,
                                          const std::vector<int>& batch,
                                          double* loss_out = nullptr);
// Gradient training of the predictor toward the frozen target embeddings.
// Incremental: repeated calls continue from the current predictor.
void rnd_train(RndPair& pair, const std::vector<SceneState>& states, int steps,
               double lr = 1e-3);
// r_t = RMSE between target and predictor embeddings of s_t.
RewardSeries rnd_reward(const RndPair& pair, const Trajectory& traj);

// ---------------------------------------------------------------------------
// World-model-based IRFs
// ---------------------------------------------------------------------------

// r_t = k-step rollout MSE against ground truth (surprisal approximation).
RewardSeries adversarial_reward(const Checkpoint& ckpt, const Trajectory& traj,
                                int k);
// r_t = mean per-component sample variance of the ensemble's k-step
// predictions (divisor n-1).
RewardSeries disagreement_reward(const std::vector<Checkpoint>& ensemble,
                                 const Trajectory& traj, int k);
// r_t = loss(old) - loss(new); the only signed IRF.
RewardSeries delta_progress_reward(const Checkpoint& old_ckpt,
                                   const Checkpoint& new_ckpt,
                                   const Trajectory& traj, int k);

// ---------------------------------------------------------------------------
// Grid sweep
// ---------------------------------------------------------------------------

struct IrRow {
  std::string trajectory_id;
  Scenario scenario = Scenario::Drop;
  std::string irf;
  long ckpt_step = 0;
  int k = 0;  // 0 for IRFs with no rollout (RND)
  double total_ir = 0.0;
};

struct IrTable {
  std::vector<IrRow> rows;
  std::map<std::string, FeatureVector> features;  // by trajectory id
  std::map<std::string, Scenario> scenario_of;

  // Totals of one (irf, ckpt_step, k) column keyed by trajectory id.
  std::map<std::string, double> column(const std::string& irf, long ckpt_step,
                                       int k) const;
  std::vector<std::string> irf_names() const;
};

// Total IR per (trajectory, IRF, checkpoint step, k). Delta-progress appears
// once per delta in `delta_grid` as "delta_progress_<delta>", paired as
// (step - delta, step) wherever both checkpoints exist.
IrTable sweep(const std::vector<std::vector<Checkpoint>>& ensembles,
              const std::vector<std::pair<long, RndPair>>& rnd_checkpoints,
              const std::vector<int>& k_grid,
              const std::vector<long>& delta_grid,
              const std::vector<Trajectory>& trajectories, int bins = 10);

void write_ir_table_csv(const IrTable& table, const std::string& path,
                        const std::string& config_hash);
IrTable read_ir_table_csv(const std::string& path,
                          std::string* config_hash = nullptr);

}  // namespace curiolab
