#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "magnav/ekf.hpp"
#include "magnav/nn.hpp"
#include "magnav/tolles_lawson.hpp"

namespace magnav {

/// Combined platform-field model: Tolles-Lawson + residual network +
/// constant bias. Network features are [m_vec(3), m_scalar], normalized.
struct HybridModel {
  TLCoefficients tl;
  NetworkConfig net;          // n_inputs must be 4
  Eigen::VectorXd nn_params;  // length net.param_count()
  double bias_cb = 0.0;       // S_CB, nT

  void validate() const;
  int n_nn_params() const { return net.param_count(); }
};

/// tl_predict + alpha*NN([m_vec, m_scalar]) + S_CB.
double hybrid_predict(const MagSample& sample, const HybridModel& model);

/// Measurement row partitioned [d/dbeta_TL(18) | d/dS_CB(1) | d/dLambda(N_p)
/// | d/dm_vec(3)].
struct HybridJacobian {
  Eigen::Matrix<double, 1, 18> d_tl;
  double d_bias = 1.0;
  Eigen::RowVectorXd d_nn;
  Eigen::Vector3d d_mvec;
};
HybridJacobian hybrid_jacobian(const MagSample& sample, const HybridModel& model);

/// Filter initialization: uninformative priors (Cold) or parameters and
/// covariance blocks carried over from a previous run (Warm).
struct WarmPayload {
  Eigen::Matrix<double, 18, 1> tl_beta;
  double bias_cb = 0.0;
  Eigen::VectorXd nn_params;
  Eigen::MatrixXd cov;  // dense (19 + N_p)^2 block over [beta_TL, S_CB, Lambda]
};

enum class StartKind { Cold, Warm };

struct StartMode {
  StartKind kind = StartKind::Cold;
  std::optional<WarmPayload> warm;
};

/// Versioned, checksummed text serialization of a warm payload.
void save_warm_payload(const WarmPayload& payload, const std::string& path);
WarmPayload load_warm_payload(const std::string& path);

/// A plausible rigid-platform truth: tens of nT permanent, percent-level
/// induced, small eddy terms.
TLCoefficients default_tl_truth();

/// Synthetic calibration scenario: a fixed external field rotated through a
/// scripted pitch/roll/yaw sinusoid schedule, with a ground-truth TL platform
/// field plus a bounded nonlinear residual.
struct HybridSimConfig {
  double duration = 600.0;  // s
  double dt = 0.1;          // s
  Eigen::Vector3d external_field_ned{20000.0, 1000.0, 44000.0};  // nT

  // Attitude schedule amplitudes (rad) and periods (s).
  Eigen::Vector3d att_amplitude{0.35, 0.35, 3.14};
  Eigen::Vector3d att_period{37.0, 53.0, 240.0};

  TLCoefficients tl_truth = default_tl_truth();
  double residual_amplitude = 30.0;  // nT, nonlinear residual scale
  double sigma_meas = 1.0;           // nT

  int n_hidden = 5;
  double nn_gain = 1e-2;
  double nn_alpha = 400.0;  // nT

  // Filter tuning (per-step process noise, initial covariances).
  double p0_tl = 1e5;
  double p0_cb = 1.0;
  double p0_nn = 1.0;
  double q_tl = 1.0;
  double q_cb = 0.0;
  double q_nn = 1e-20;
  double r = 10.0;  // nT^2

  std::uint64_t seed = 1;
};

/// Outcome of one cold/warm calibration run (no navigation states).
struct HybridRunResult {
  std::vector<double> t;
  std::vector<double> platform_truth, platform_model;
  std::vector<double> tl_output, nn_output, bias_output;
  std::vector<double> calib_rmse_window;  // running RMSE over a trailing window
  double final_rmse = 0.0;                // RMSE over the last quarter of the run
  double nn_output_max_abs = 0.0;
  bool diverged = false;

  Eigen::Matrix<double, 18, 1> tl_estimate;
  double bias_estimate = 0.0;
  Eigen::VectorXd nn_estimate;
  Eigen::MatrixXd final_cov;

  WarmPayload as_warm_payload() const;
};

/// Joint EKF over [beta_TL, S_CB, Lambda_NN] on the synthetic scenario.
HybridRunResult run_hybrid_calibration(const HybridSimConfig& config,
                                       const StartMode& start);

}  // namespace magnav
