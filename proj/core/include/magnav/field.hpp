#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace magnav {

struct OutOfDomain : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One isotropic Gaussian anomaly bump.
struct GaussianBump {
  Eigen::Vector2d center;  // m
  double amplitude;        // nT
  double width;            // m, > 0
};

/// Synthetic scalar anomaly field over a plane: either an analytic sum of
/// Gaussian bumps or a bilinearly interpolated regular grid.
class AnomalyMap2D {
 public:
  enum class Kind { AnalyticGaussianSum, Grid };

  static AnomalyMap2D gaussian_sum(std::vector<GaussianBump> bumps,
                                   double gradient_step = 1e-3);
  static AnomalyMap2D grid(Eigen::Vector2d origin, double spacing,
                           Eigen::MatrixXd values, double gradient_step = 1e-3);

  /// Seeded default map: `n_bumps` bumps over a [0, extent]^2 domain with
  /// amplitudes uniform in +-[50, 300] nT.
  static AnomalyMap2D random_default(std::uint64_t seed, int n_bumps = 40,
                                     double extent = 2000.0);

  /// Load a grid map from CSV: header nx,ny,origin_x,origin_y,spacing then
  /// row-major values.
  static AnomalyMap2D load_grid_csv(const std::string& path);

  /// Field value at pos. Grid maps throw OutOfDomain outside their extent.
  double value(const Eigen::Vector2d& pos) const;

  /// Central finite-difference gradient with gradient_step spacing.
  Eigen::Vector2d gradient(const Eigen::Vector2d& pos) const;

  /// Closed-form gradient, AnalyticGaussianSum only (test oracle).
  Eigen::Vector2d analytic_gradient(const Eigen::Vector2d& pos) const;

  Kind kind() const { return kind_; }
  double gradient_step() const { return gradient_step_; }

  /// Bounding box [min, max] of valid queries. Analytic maps are unbounded
  /// but report the extent covering their bumps for trajectory checks.
  std::pair<Eigen::Vector2d, Eigen::Vector2d> domain() const;

 private:
  Kind kind_ = Kind::AnalyticGaussianSum;
  double gradient_step_ = 1e-3;

  std::vector<GaussianBump> bumps_;

  Eigen::Vector2d origin_ = Eigen::Vector2d::Zero();
  double spacing_ = 1.0;
  Eigen::MatrixXd values_;  // values_(iy, ix)
};

/// Ground-truth platform interference of the conceptual model:
/// g = b1 sin(b2 px) + b3 cos(b4 py) + b5 (m/c)^2 + b6 cos(psi) + b7 s^2.
struct InterferenceTruth {
  Eigen::Matrix<double, 7, 1> beta = Eigen::Matrix<double, 7, 1>::Zero();
  double c = 100.0;  // nT, normalizer for the map term

  /// Default truth for the odometry study. b1, b2, b4 are zero: an EKF
  /// started at beta = 0 has exactly zero sensitivity to the sin/cos
  /// frequency parameters (and to b1 while b2_hat = 0), so they can never
  /// leave the origin; the default exercises the identifiable subset.
  static InterferenceTruth toy_default();
};

/// Feature order used throughout: [p_x, p_y, m, psi, s].
double interference_truth(const InterferenceTruth& truth,
                          const Eigen::Matrix<double, 5, 1>& features);

/// Analytic partials of the truth function with respect to beta_1..7.
Eigen::Matrix<double, 1, 7> interference_jacobian_beta(
    const InterferenceTruth& truth, const Eigen::Matrix<double, 5, 1>& features);

}  // namespace magnav
