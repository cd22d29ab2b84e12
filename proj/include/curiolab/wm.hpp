#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curiolab/mlp.hpp"
#include "curiolab/sim.hpp"
#include "curiolab/types.hpp"

namespace curiolab {

// Per-feature affine map; identity until fitted. Columns are samples.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  bool fitted() const { return mean.size() > 0; }
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& f) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& f) const;
  void fit(const Eigen::MatrixXd& samples);  // columns are samples
};

// Consecutive (state, next-state) pairs, deep-copied from the train split.
struct TransitionDataset {
  std::vector<std::pair<SceneState, SceneState>> pairs;

  static TransitionDataset from_trajectories(
      const std::vector<Trajectory>& trajs);
  std::size_t size() const { return pairs.size(); }
};

struct WmConfig {
  std::vector<int> hidden = {64, 64};
};

struct TrainSchedule {
  std::vector<long> checkpoint_steps;  // ascending, first entry 0
  double lr = 1e-3;
  int batch_size = 16;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

// Forward predictor over particle states. A shared per-particle MLP sees
// each particle's normalized features concatenated with the mean-pooled
// scene context, and emits a normalized (dpos, dvel) residual.
struct Checkpoint;

class WorldModel {
 public:
  static constexpr int kFeatures = 6;  // pos3 + vel3

  static WorldModel init(std::uint64_t seed, const WmConfig& cfg = {});
  // Test-only variant delegating predict to the simulator.
  static WorldModel oracle(std::vector<ObjectSpec> objects,
                           std::vector<Spring> springs, double dt,
                           SimConfig cfg = {});

  void fit_normalizers(const TransitionDataset& data);

  SceneState predict(const SceneState& state) const;
  SceneState rollout(const SceneState& state, int k) const;
  // State-space MSE of the k-step rollout against ground truth.
  double loss(const SceneState& state, const SceneState& target, int k) const;

  // One Adam update on the batch; returns the pre-update batch loss.
  double train_step(const TransitionDataset& data,
                    const std::vector<int>& batch_indices, double lr);
  // Full gradient of the batch loss, in the layer layout of `net`.
  std::vector<LayerGrad> batch_gradient(const TransitionDataset& data,
                                        const std::vector<int>& batch_indices,
                                        double* loss_out = nullptr) const;
  std::vector<Checkpoint> train(const TransitionDataset& data,
                                const TrainSchedule& schedule);

  void save(const std::string& path) const;
  static WorldModel load(const std::string& path);

  long train_steps() const { return train_steps_; }
  bool is_oracle() const { return oracle_.has_value(); }
  std::uint64_t weights_fingerprint() const;

  // Flattened per-particle feature matrix (kFeatures x P).
  static Eigen::MatrixXd state_features(const SceneState& state);

  Mlp net;
  Normalizer input_norm;
  Normalizer delta_norm;
  std::uint64_t seed = 0;

 private:
  struct OracleWorld {
    std::vector<ObjectSpec> objects;
    std::vector<Spring> springs;
    double dt = 0.01;
    SimConfig cfg;
  };

  Eigen::MatrixXd net_input(const SceneState& state) const;

  long train_steps_ = 0;
  AdamState opt_;
  std::optional<OracleWorld> oracle_;
};

// Model snapshot taken during training; step equals train_steps at save time.
struct Checkpoint {
  WorldModel params;
  long step = 0;
};

}  // namespace curiolab
