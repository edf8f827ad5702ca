#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

namespace magnav {

/// Mean + full covariance of the (augmented) estimator state.
struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Noise configuration for one predict/update cycle.
struct NoiseConfig {
  Eigen::MatrixXd process_noise;    // Q_d, discretized (units^2)
  double measurement_variance = 1;  // R, nT^2
  double dt = 1.0;                  // s
  bool joseph_form = false;         // covariance update variant
};

/// Innovation gate: reject updates with nu^2/S above the chi-square threshold.
struct GateConfig {
  double threshold = 6.0;
  bool active = true;
};

/// Bookkeeping for one scalar measurement update.
struct UpdateRecord {
  double innovation = 0.0;           // nu = z - h(x)
  double innovation_variance = 0.0;  // S = H P H^T + R
  double nis = 0.0;                  // nu^2 / S
  bool gated = false;
  Eigen::VectorXd kalman_gain;
};

/// Covariance decoupling levels from fully coupled down to a diagonal
/// parameter block.
enum class DecouplingLevel { FullyCoupled, StateModel, LayerWise, FullDiagonalParams };

/// Block layout for decoupling: the first `state_dim` entries are kinematic
/// state; `param_blocks` are [begin,end) index ranges partitioning the rest.
struct DecouplingSpec {
  DecouplingLevel level = DecouplingLevel::FullyCoupled;
  int state_dim = 0;
  std::vector<std::pair<int, int>> param_blocks;
};

/// Raised when an innovation variance is numerically degenerate (S <= 0).
struct NumericalDegeneracy : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Time update for static parameters: mean unchanged, P += Q_d.
GaussianState predict_static(const GaussianState& state, const NoiseConfig& noise);

/// Time update for linear dynamics: x <- F x + G u, P <- F P F^T + Q_d.
GaussianState predict_linear(const GaussianState& state, const Eigen::MatrixXd& F,
                             const Eigen::MatrixXd& G, const Eigen::VectorXd& u,
                             const NoiseConfig& noise);

/// Scalar measurement update with optional chi-square gating.
/// A gated update returns the prior unchanged.
std::pair<GaussianState, UpdateRecord> update_scalar(
    const GaussianState& state, double z, double predicted, const Eigen::RowVectorXd& H,
    const NoiseConfig& noise, const std::optional<GateConfig>& gate = std::nullopt);

/// Zero the covariance entries outside the blocks allowed by the level.
Eigen::MatrixXd apply_decoupling(const Eigen::MatrixXd& cov, const DecouplingSpec& spec);

/// Relative residual of the gain identity K R = P_post H^T, which ties the
/// Kalman update to a covariance-preconditioned gradient step. Near zero
/// (exact in exact arithmetic) for any valid update.
double ng_identity_residual(const GaussianState& prior, const Eigen::RowVectorXd& H,
                            const NoiseConfig& noise);

/// The state increment computed in gradient form, dx = P_post (H^T R^-1 nu).
/// Contract: equals K*nu from update_scalar to 1e-9 relative.
Eigen::VectorXd update_as_preconditioned_gradient(const GaussianState& prior, double z,
                                                  double predicted,
                                                  const Eigen::RowVectorXd& H,
                                                  const NoiseConfig& noise);

/// (A + A^T)/2 convenience used after every covariance-altering step.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

}  // namespace magnav
