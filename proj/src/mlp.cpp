#include "curiolab/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace curiolab {

std::vector<int> MlpArch::layer_dims() const {
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  return dims;
}

void MlpArch::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("mlp arch: input/output dims must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("mlp arch: hidden sizes must be >= 1");
}

Mlp::Mlp(const MlpArch& a, Rng& rng) : arch(a) {
  arch.validate();
  const auto dims = arch.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    Eigen::MatrixXd w(fan_out, fan_in);
    const double scale = std::sqrt(6.0 / (fan_in + fan_out));
    const bool zero = arch.zero_output_layer && l + 2 == dims.size();
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c)
        w(r, c) = zero ? 0.0 : rng.uniform(-scale, scale);
    weights.push_back(std::move(w));
    biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (int l = 0; l < n_layers(); ++l) {
    a = (weights[l] * a).colwise() + biases[l];
    if (l + 1 < n_layers()) a = a.array().tanh().matrix();
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_cached(const Eigen::MatrixXd& x,
                                    std::vector<Eigen::MatrixXd>& acts) const {
  acts.clear();
  acts.push_back(x);
  for (int l = 0; l < n_layers(); ++l) {
    Eigen::MatrixXd a = (weights[l] * acts.back()).colwise() + biases[l];
    if (l + 1 < n_layers()) a = a.array().tanh().matrix();
    acts.push_back(std::move(a));
  }
  return acts.back();
}

void Mlp::backward(const std::vector<Eigen::MatrixXd>& acts,
                   const Eigen::MatrixXd& d_out,
                   std::vector<LayerGrad>& grads) const {
  Eigen::MatrixXd delta = d_out;  // output layer is linear
  for (int l = n_layers() - 1; l >= 0; --l) {
    grads[l].w += delta * acts[l].transpose();
    grads[l].b += delta.rowwise().sum();
    if (l > 0) {
      delta = weights[l].transpose() * delta;
      delta.array() *= 1.0 - acts[l].array().square();  // tanh'
    }
  }
}

std::vector<LayerGrad> Mlp::zero_grads() const {
  std::vector<LayerGrad> grads;
  for (int l = 0; l < n_layers(); ++l)
    grads.push_back({Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols()),
                     Eigen::VectorXd::Zero(biases[l].size())});
  return grads;
}

bool Mlp::same_shape(const Mlp& other) const {
  if (n_layers() != other.n_layers()) return false;
  for (int l = 0; l < n_layers(); ++l)
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols())
      return false;
  return true;
}

void AdamState::init(const Mlp& net) {
  t_ = 0;
  m_ = net.zero_grads();
  v_ = net.zero_grads();
}

void AdamState::step(Mlp& net, const std::vector<LayerGrad>& grads,
                     double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (m_.empty()) init(net);
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (int l = 0; l < net.n_layers(); ++l) {
    if (!grads[l].w.allFinite() || !grads[l].b.allFinite())
      throw std::runtime_error("adam: non-finite gradient at layer " +
                               std::to_string(l));
    m_[l].w = kBeta1 * m_[l].w + (1.0 - kBeta1) * grads[l].w;
    v_[l].w = kBeta2 * v_[l].w.array().matrix() +
              (1.0 - kBeta2) * grads[l].w.array().square().matrix();
    m_[l].b = kBeta1 * m_[l].b + (1.0 - kBeta1) * grads[l].b;
    v_[l].b = kBeta2 * v_[l].b.array().matrix() +
              (1.0 - kBeta2) * grads[l].b.array().square().matrix();
    net.weights[l].array() -=
        lr * (m_[l].w.array() / bc1) /
        ((v_[l].w.array() / bc2).sqrt() + kEps);
    net.biases[l].array() -=
        lr * (m_[l].b.array() / bc1) /
        ((v_[l].b.array() / bc2).sqrt() + kEps);
  }
}

}  // namespace curiolab
