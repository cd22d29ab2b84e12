#pragma once

#include <Eigen/Core>
#include <vector>

#include "curiolab/rng.hpp"

namespace curiolab {

enum class Activation { Tanh };

struct MlpArch {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Activation act = Activation::Tanh;
  // Start the last layer at zero so the network is the zero map at init
  // (used for residual predictors).
  bool zero_output_layer = false;

  std::vector<int> layer_dims() const;
  void validate() const;
};

struct LayerGrad {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

// Dense feedforward net, double precision, columns are samples. Hidden
// layers use tanh, the output layer is linear. Glorot-uniform init from the
// project PRNG so identical seeds give identical weights.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const MlpArch& arch, Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  // Caches all layer activations (acts[0] = input) for backward.
  Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& x,
                                 std::vector<Eigen::MatrixXd>& acts) const;
  // Accumulates dLoss/dW into grads given dLoss/dOutput.
  void backward(const std::vector<Eigen::MatrixXd>& acts,
                const Eigen::MatrixXd& d_out,
                std::vector<LayerGrad>& grads) const;
  std::vector<LayerGrad> zero_grads() const;

  int n_layers() const { return static_cast<int>(weights.size()); }
  bool same_shape(const Mlp& other) const;

  MlpArch arch;
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: out x in
  std::vector<Eigen::VectorXd> biases;
};

// Adam with beta1=0.9, beta2=0.999, eps=1e-8.
class AdamState {
 public:
  void init(const Mlp& net);
  void step(Mlp& net, const std::vector<LayerGrad>& grads, double lr);
  bool initialized() const { return !m_.empty(); }

 private:
  long t_ = 0;
  std::vector<LayerGrad> m_, v_;
};

}  // namespace curiolab
