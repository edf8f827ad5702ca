#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace magnav {

/// The 18 Tolles-Lawson parameters in the fixed order
/// [a1 a2 a3 | b1..b6 | c1..c9]: permanent (nT), induced (dimensionless,
/// upper-triangular symmetrized form), eddy (s).
struct TLCoefficients {
  Eigen::Matrix<double, 18, 1> beta = Eigen::Matrix<double, 18, 1>::Zero();

  double residual_rms = 0.0;  // fit residual of the producing calibration, nT
};

/// One magnetometer sample: body-frame vector reading, scalar total field,
/// finite-difference vector rate.
struct MagSample {
  Eigen::Vector3d m_vec;   // nT
  double m_scalar;         // B_t, nT, > 0
  Eigen::Vector3d m_dot;   // nT/s
  double dt = 1.0;         // s
};

struct IllConditioned : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// (m_t - m_{t-1}) / dt.
Eigen::Vector3d finite_diff_mdot(const Eigen::Vector3d& m_vec_t,
                                 const Eigen::Vector3d& m_vec_prev, double dt);

/// One row of the A-matrix: [Bhat | B_t*quadratic(Bhat) | mdot x Bhat terms].
/// Only the direction of m_vec enters; the induced block uses B = B_t*Bhat.
Eigen::Matrix<double, 1, 18> build_a_row(const MagSample& sample);

/// Platform-field prediction A_TL * beta (external field not included).
double tl_predict(const MagSample& sample, const TLCoefficients& coeffs);

/// Closed-form partials of tl_predict with respect to the components of the
/// scaled field vector B = B_t * Bhat, holding B_t and m_dot fixed.
Eigen::Vector3d tl_jacobian_vector_mag(const MagSample& sample,
                                       const TLCoefficients& coeffs);

/// Least squares on B_t - B_e = A beta with optional ridge term.
/// Throws IllConditioned when the normal equations are rank deficient and
/// ridge == 0.
TLCoefficients calibrate_map_based(const std::vector<MagSample>& samples,
                                   const std::vector<double>& b_e_known,
                                   double ridge = 0.0);

/// Map-less variant: zero-phase band-pass applied to the scalar series and
/// to every A-matrix column before the least squares solve.
TLCoefficients calibrate_bandpass(const std::vector<MagSample>& samples,
                                  double f_low, double f_high, double sample_rate,
                                  double ridge = 0.0);

/// Accurate-vector variant; full 9-parameter induced matrix estimated
/// internally, reported in the symmetrized 6-parameter form.
struct VectorCalibration {
  TLCoefficients symmetrized;                      // 18-parameter form
  Eigen::Matrix<double, 21, 1> raw;                // [a(3), induced(9), eddy(9)]
};
VectorCalibration calibrate_vector(const std::vector<MagSample>& samples,
                                   const std::vector<Eigen::Vector3d>& b_e_vec_known,
                                   double ridge = 0.0);

/// 18-line labeled text serialization, reloadable by the hybrid module.
void save_tl_coefficients(const TLCoefficients& coeffs, const std::string& path);
TLCoefficients load_tl_coefficients(const std::string& path);

/// Zero-phase (forward-backward) Butterworth band-pass, order 4 overall:
/// a second-order high-pass at f_low cascaded with a second-order low-pass
/// at f_high, each run in both directions.
std::vector<double> bandpass_zero_phase(const std::vector<double>& x, double f_low,
                                        double f_high, double sample_rate);

}  // namespace magnav
