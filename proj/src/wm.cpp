#include "curiolab/wm.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace curiolab {
namespace {

constexpr char kMagic[4] = {'C', 'W', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint file truncated");
  return v;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd get_vector(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  Eigen::VectorXd v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint file truncated");
  return v;
}

void check_layout(const SceneState& a, const SceneState& b,
                  const char* what) {
  if (a.particle_count() != b.particle_count() ||
      a.object_index != b.object_index)
    throw std::invalid_argument(std::string(what) +
                                ": particle layout mismatch");
}

}  // namespace

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& f) const {
  if (!fitted()) return f;
  return ((f.colwise() - mean).array().colwise() / stddev.array()).matrix();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& f) const {
  if (!fitted()) return f;
  return ((f.array().colwise() * stddev.array()).matrix().colwise() + mean);
}

void Normalizer::fit(const Eigen::MatrixXd& samples) {
  if (samples.cols() < 2)
    throw std::invalid_argument("normalizer: need at least 2 samples");
  mean = samples.rowwise().mean();
  Eigen::MatrixXd centered = samples.colwise() - mean;
  stddev = (centered.array().square().rowwise().sum() /
            static_cast<double>(samples.cols() - 1))
               .sqrt()
               .matrix();
  for (Eigen::Index i = 0; i < stddev.size(); ++i)
    if (stddev[i] < 1e-9) stddev[i] = 1.0;  // constant feature guard
}

TransitionDataset TransitionDataset::from_trajectories(
    const std::vector<Trajectory>& trajs) {
  TransitionDataset data;
  for (const Trajectory& t : trajs)
    for (int i = 0; i + 1 < t.length(); ++i)
      data.pairs.emplace_back(t.states[i], t.states[i + 1]);
  return data;
}

void TrainSchedule::validate() const {
  if (checkpoint_steps.empty())
    throw std::invalid_argument("train schedule: no checkpoint steps");
  for (std::size_t i = 1; i < checkpoint_steps.size(); ++i)
    if (checkpoint_steps[i] <= checkpoint_steps[i - 1])
      throw std::invalid_argument("train schedule: steps must ascend");
  if (checkpoint_steps.front() < 0)
    throw std::invalid_argument("train schedule: steps must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("train schedule: lr must be > 0");
  if (batch_size < 1)
    throw std::invalid_argument("train schedule: batch_size must be >= 1");
}

Eigen::MatrixXd WorldModel::state_features(const SceneState& state) {
  const int P = state.particle_count();
  Eigen::MatrixXd f(kFeatures, P);
  for (int i = 0; i < P; ++i) {
    f.col(i).head<3>() = state.positions[i];
    f.col(i).tail<3>() = state.velocities[i];
  }
  return f;
}

WorldModel WorldModel::init(std::uint64_t seed, const WmConfig& cfg) {
  WorldModel wm;
  wm.seed = seed;
  MlpArch arch;
  arch.input_dim = 2 * kFeatures;  // particle features + pooled context
  arch.hidden = cfg.hidden;
  arch.output_dim = kFeatures;
  arch.zero_output_layer = true;
  Rng rng(fnv1a(&seed, sizeof(seed)));
  wm.net = Mlp(arch, rng);
  return wm;
}

WorldModel WorldModel::oracle(std::vector<ObjectSpec> objects,
                              std::vector<Spring> springs, double dt,
                              SimConfig cfg) {
  WorldModel wm;
  wm.oracle_ = OracleWorld{std::move(objects), std::move(springs), dt, cfg};
  return wm;
}

void WorldModel::fit_normalizers(const TransitionDataset& data) {
  if (data.pairs.empty())
    throw std::invalid_argument("fit_normalizers: empty dataset");
  std::size_t total = 0;
  for (const auto& [s, next] : data.pairs)
    total += static_cast<std::size_t>(s.particle_count());
  Eigen::MatrixXd inputs(kFeatures, total);
  Eigen::MatrixXd deltas(kFeatures, total);
  std::size_t col = 0;
  for (const auto& [s, next] : data.pairs) {
    const Eigen::MatrixXd fs = state_features(s);
    const Eigen::MatrixXd fn = state_features(next);
    inputs.middleCols(col, fs.cols()) = fs;
    deltas.middleCols(col, fs.cols()) = fn - fs;
    col += static_cast<std::size_t>(fs.cols());
  }
  input_norm.fit(inputs);
  delta_norm.fit(deltas);
}

Eigen::MatrixXd WorldModel::net_input(const SceneState& state) const {
  const Eigen::MatrixXd z = input_norm.normalize(state_features(state));
  Eigen::MatrixXd x(2 * kFeatures, z.cols());
  x.topRows(kFeatures) = z;
  x.bottomRows(kFeatures) = z.rowwise().mean().replicate(1, z.cols());
  return x;
}

SceneState WorldModel::predict(const SceneState& state) const {
  if (oracle_)
    return step(state, oracle_->objects, oracle_->springs, oracle_->dt,
                oracle_->cfg);
  const Eigen::MatrixXd y = net.forward(net_input(state));
  if (!y.allFinite())
    throw std::runtime_error("predict: non-finite activations");
  const Eigen::MatrixXd d = delta_norm.denormalize(y);
  SceneState out = state;
  out.time_index = state.time_index + 1;
  for (int i = 0; i < state.particle_count(); ++i) {
    out.positions[i] += d.col(i).head<3>();
    out.velocities[i] += d.col(i).tail<3>();
  }
  return out;
}

SceneState WorldModel::rollout(const SceneState& state, int k) const {
  if (k < 1) throw std::invalid_argument("rollout: k must be >= 1");
  SceneState s = state;
  for (int i = 0; i < k; ++i) s = predict(s);
  return s;
}

double WorldModel::loss(const SceneState& state, const SceneState& target,
                        int k) const {
  check_layout(state, target, "loss");
  const SceneState pred = rollout(state, k);
  const Eigen::MatrixXd err =
      state_features(pred) - state_features(target);
  return err.array().square().sum() /
         static_cast<double>(err.size());
}

std::vector<LayerGrad> WorldModel::batch_gradient(
    const TransitionDataset& data, const std::vector<int>& batch_indices,
    double* loss_out) const {
  if (is_oracle())
    throw std::logic_error("batch_gradient: oracle model is not trainable");
  if (batch_indices.empty())
    throw std::invalid_argument("batch_gradient: empty batch");
  std::size_t total_components = 0;
  for (int idx : batch_indices)
    total_components += static_cast<std::size_t>(
        kFeatures * data.pairs[idx].first.particle_count());
  const double n = static_cast<double>(total_components);

  std::vector<LayerGrad> grads = net.zero_grads();
  double loss_sum = 0.0;
  std::vector<Eigen::MatrixXd> acts;
  for (int idx : batch_indices) {
    const auto& [s, next] = data.pairs[idx];
    check_layout(s, next, "train batch");
    const Eigen::MatrixXd x = net_input(s);
    const Eigen::MatrixXd y = net.forward_cached(x, acts);
    const Eigen::MatrixXd pred_delta = delta_norm.denormalize(y);
    const Eigen::MatrixXd err =
        state_features(s) + pred_delta - state_features(next);
    loss_sum += err.array().square().sum();
    // d(loss)/dy chains through the affine denormalization.
    Eigen::MatrixXd d_out = (2.0 / n) * err;
    if (delta_norm.fitted())
      d_out.array().colwise() *= delta_norm.stddev.array();
    net.backward(acts, d_out, grads);
  }
  if (loss_out) *loss_out = loss_sum / n;
  return grads;
}

double WorldModel::train_step(const TransitionDataset& data,
                              const std::vector<int>& batch_indices,
                              double lr) {
  if (lr < 0.0) throw std::invalid_argument("train_step: lr must be >= 0");
  double loss_value = 0.0;
  const std::vector<LayerGrad> grads =
      batch_gradient(data, batch_indices, &loss_value);
  opt_.step(net, grads, lr);
  ++train_steps_;
  return loss_value;
}

std::vector<Checkpoint> WorldModel::train(const TransitionDataset& data,
                                          const TrainSchedule& schedule) {
  schedule.validate();
  if (data.pairs.empty()) throw std::invalid_argument("train: empty dataset");
  if (!input_norm.fitted()) fit_normalizers(data);

  std::vector<Checkpoint> checkpoints;
  auto next_ckpt = schedule.checkpoint_steps.begin();
  const long last_step = schedule.checkpoint_steps.back();
  Rng shuffle_rng(fnv1a(&schedule.shuffle_seed, sizeof(schedule.shuffle_seed),
                        fnv1a(&seed, sizeof(seed))));
  std::vector<int> order(data.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();

  while (true) {
    if (next_ckpt != schedule.checkpoint_steps.end() &&
        train_steps_ == *next_ckpt) {
      checkpoints.push_back({*this, train_steps_});
      ++next_ckpt;
    }
    if (train_steps_ >= last_step) break;
    std::vector<int> batch;
    for (int b = 0; b < schedule.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    train_step(data, batch, schedule.lr);
  }
  return checkpoints;
}

std::uint64_t WorldModel::weights_fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int l = 0; l < net.n_layers(); ++l) {
    h = fnv1a(net.weights[l].data(),
              net.weights[l].size() * sizeof(double), h);
    h = fnv1a(net.biases[l].data(), net.biases[l].size() * sizeof(double), h);
  }
  if (input_norm.fitted()) {
    h = fnv1a(input_norm.mean.data(),
              input_norm.mean.size() * sizeof(double), h);
    h = fnv1a(delta_norm.mean.data(),
              delta_norm.mean.size() * sizeof(double), h);
  }
  return h;
}

void WorldModel::save(const std::string& path) const {
  if (is_oracle())
    throw std::logic_error("save: oracle world model has no weights");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.arch.input_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.arch.output_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.arch.hidden.size()));
  for (int h : net.arch.hidden) put<std::uint32_t>(os, h);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(net.arch.act));
  put<std::uint64_t>(os, seed);
  put<std::int64_t>(os, train_steps_);
  for (int l = 0; l < net.n_layers(); ++l) {
    const auto& w = net.weights[l];
    os.write(reinterpret_cast<const char*>(w.data()),
             static_cast<std::streamsize>(w.size() * sizeof(double)));
    put_vector(os, net.biases[l]);
  }
  auto put_norm = [&](const Normalizer& nrm) {
    put<std::uint8_t>(os, nrm.fitted() ? 1 : 0);
    if (nrm.fitted()) {
      put_vector(os, nrm.mean);
      put_vector(os, nrm.stddev);
    }
  };
  put_norm(input_norm);
  put_norm(delta_norm);
  if (!os) throw std::runtime_error("write failed for " + path);
}

WorldModel WorldModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + " in " + path);
  WorldModel wm;
  MlpArch arch;
  arch.input_dim = static_cast<int>(get<std::uint32_t>(is));
  arch.output_dim = static_cast<int>(get<std::uint32_t>(is));
  const auto n_hidden = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    arch.hidden.push_back(static_cast<int>(get<std::uint32_t>(is)));
  arch.act = static_cast<Activation>(get<std::uint8_t>(is));
  wm.seed = get<std::uint64_t>(is);
  wm.train_steps_ = static_cast<long>(get<std::int64_t>(is));
  Rng dummy(0);
  wm.net = Mlp(arch, dummy);
  for (int l = 0; l < wm.net.n_layers(); ++l) {
    auto& w = wm.net.weights[l];
    is.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint file truncated");
    wm.net.biases[l] = get_vector(is);
  }
  auto get_norm = [&](Normalizer& nrm) {
    if (get<std::uint8_t>(is)) {
      nrm.mean = get_vector(is);
      nrm.stddev = get_vector(is);
    }
  };
  get_norm(wm.input_norm);
  get_norm(wm.delta_norm);
  return wm;
}

}  // namespace curiolab
