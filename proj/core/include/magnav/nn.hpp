#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

namespace magnav {

/// Hidden-layer activation. Only Tanh is used by the filters; the
/// enumeration exists so alternatives can be added without touching
/// any filter code.
enum class Activation { Tanh };

/// Configuration of the shallow interference network: one hidden layer,
/// linear scalar output, fixed affine input normalization.
struct NetworkConfig {
  int n_inputs = 1;
  int n_hidden = 1;
  bool use_output_bias = true;
  double output_scale = 1.0;  // alpha, nT
  Eigen::VectorXd input_offsets;  // length n_inputs
  Eigen::VectorXd input_scales;   // length n_inputs, strictly positive
  Activation activation = Activation::Tanh;

  /// Number of flattened parameters: W1 + b1 + W2 (+ b2).
  int param_count() const {
    return n_hidden * n_inputs + n_hidden + n_hidden + (use_output_bias ? 1 : 0);
  }

  /// Identity normalization (offset 0, scale 1) for the given size.
  static NetworkConfig plain(int n_inputs, int n_hidden, bool use_output_bias = true,
                             double output_scale = 1.0);

  void validate() const;
};

/// Weights and biases of the network in structured form.
/// Flattened layout is [vec(W1), b1, W2, (b2)] with vec() column-major.
struct NetworkWeights {
  Eigen::MatrixXd w1;  // n_hidden x n_inputs
  Eigen::VectorXd b1;  // n_hidden
  Eigen::VectorXd w2;  // n_hidden
  double b2 = 0.0;     // present only if use_output_bias
};

/// Flatten structured weights into the filter's parameter vector.
Eigen::VectorXd pack(const NetworkWeights& w, const NetworkConfig& cfg);

/// Inverse of pack(). Throws std::invalid_argument on length mismatch.
NetworkWeights unpack(const Eigen::VectorXd& params, const NetworkConfig& cfg);

/// Glorot-normal weight init with gain: sigma_L = gain * sqrt(2/(fan_in+fan_out)),
/// biases zero. Deterministic for a fixed seed.
Eigen::VectorXd glorot_init(const NetworkConfig& cfg, double gain, std::uint64_t seed);

/// Network output in physical units (nT): alpha * g(normalized features).
double nn_forward(const Eigen::VectorXd& params, const Eigen::VectorXd& raw_features,
                  const NetworkConfig& cfg);

/// Row vector d(output)/d(params), ordered like the parameter layout.
Eigen::RowVectorXd nn_jacobian_params(const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& raw_features,
                                      const NetworkConfig& cfg);

/// Row vector d(output)/d(raw features), chain rule through normalization.
Eigen::RowVectorXd nn_jacobian_inputs(const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& raw_features,
                                      const NetworkConfig& cfg);

}  // namespace magnav
