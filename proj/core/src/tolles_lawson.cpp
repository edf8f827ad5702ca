#include "magnav/tolles_lawson.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace magnav {

namespace {

const char* kLabels[18] = {"a1", "a2", "a3", "b1", "b2", "b3", "b4", "b5", "b6",
                           "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"};

// Least squares with optional ridge; rank check when unregularized.
Eigen::VectorXd solve_ls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                         double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("calibrate: ridge must be >= 0");
  const Eigen::MatrixXd ata =
      a.transpose() * a + ridge * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  if (ridge == 0.0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-10 * sv(0))
      throw IllConditioned(
          "calibrate: rank-deficient system; add attitude excitation or use "
          "ridge > 0");
  }
  return ata.ldlt().solve(a.transpose() * y);
}

}  // namespace

Eigen::Vector3d finite_diff_mdot(const Eigen::Vector3d& m_vec_t,
                                 const Eigen::Vector3d& m_vec_prev, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("finite_diff_mdot: dt must be > 0");
  return (m_vec_t - m_vec_prev) / dt;
}

Eigen::Matrix<double, 1, 18> build_a_row(const MagSample& sample) {
  const double norm = sample.m_vec.norm();
  if (!(norm > 0.0))
    throw std::invalid_argument("build_a_row: zero vector-magnetometer reading");
  if (!(sample.m_scalar > 0.0))
    throw std::invalid_argument("build_a_row: scalar measurement must be > 0");

  const Eigen::Vector3d bh = sample.m_vec / norm;        // direction cosines
  const Eigen::Vector3d b = sample.m_scalar * bh;        // scalar-referenced field
  const Eigen::Vector3d& bd = sample.m_dot;

  Eigen::Matrix<double, 1, 18> row;
  row << bh.x(), bh.y(), bh.z(),
      b.x() * bh.x(), b.x() * bh.y(), b.x() * bh.z(),
      b.y() * bh.y(), b.y() * bh.z(), b.z() * bh.z(),
      bd.x() * bh.x(), bd.x() * bh.y(), bd.x() * bh.z(),
      bd.y() * bh.x(), bd.y() * bh.y(), bd.y() * bh.z(),
      bd.z() * bh.x(), bd.z() * bh.y(), bd.z() * bh.z();
  return row;
}

double tl_predict(const MagSample& sample, const TLCoefficients& coeffs) {
  return build_a_row(sample).dot(coeffs.beta);
}

Eigen::Vector3d tl_jacobian_vector_mag(const MagSample& sample,
                                       const TLCoefficients& coeffs) {
  const double bt = sample.m_scalar;
  if (!(bt > 0.0))
    throw std::invalid_argument("tl_jacobian_vector_mag: B_t must be > 0");
  const Eigen::Vector3d bh = sample.m_vec.normalized();
  const Eigen::Vector3d& bd = sample.m_dot;
  const auto& p = coeffs.beta;

  // Partials of A*beta with respect to B = B_t*Bhat, B_t and m_dot held fixed.
  Eigen::Vector3d j;
  j.x() = p(0) / bt + (2.0 * bh.x() * p(3) + bh.y() * p(4) + bh.z() * p(5)) +
          (bd.x() * p(9) + bd.y() * p(12) + bd.z() * p(15)) / bt;
  j.y() = p(1) / bt + (bh.x() * p(4) + 2.0 * bh.y() * p(6) + bh.z() * p(7)) +
          (bd.x() * p(10) + bd.y() * p(13) + bd.z() * p(16)) / bt;
  j.z() = p(2) / bt + (bh.x() * p(5) + bh.y() * p(7) + 2.0 * bh.z() * p(8)) +
          (bd.x() * p(11) + bd.y() * p(14) + bd.z() * p(17)) / bt;
  return j;
}

TLCoefficients calibrate_map_based(const std::vector<MagSample>& samples,
                                   const std::vector<double>& b_e_known,
                                   double ridge) {
  if (samples.size() != b_e_known.size())
    throw std::invalid_argument("calibrate_map_based: B_e length mismatch");
  if (samples.size() < 19)
    throw std::invalid_argument("calibrate_map_based: need >= 19 samples");

  const std::size_t n = samples.size() - 1;  // first sample has no valid m_dot
  Eigen::MatrixXd a(n, 18);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.row(i) = build_a_row(samples[i + 1]);
    y(i) = samples[i + 1].m_scalar - b_e_known[i + 1];
  }

  TLCoefficients out;
  out.beta = solve_ls(a, y, ridge);
  out.residual_rms = std::sqrt((a * out.beta - y).squaredNorm() / n);
  return out;
}

TLCoefficients calibrate_bandpass(const std::vector<MagSample>& samples,
                                  double f_low, double f_high, double sample_rate,
                                  double ridge) {
  if (samples.size() < 19)
    throw std::invalid_argument("calibrate_bandpass: need >= 19 samples");

  const std::size_t n = samples.size() - 1;
  Eigen::MatrixXd a(n, 18);
  std::vector<double> scalar(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.row(i) = build_a_row(samples[i + 1]);
    scalar[i] = samples[i + 1].m_scalar;
  }

  const std::vector<double> yf = bandpass_zero_phase(scalar, f_low, f_high, sample_rate);
  Eigen::MatrixXd af(n, 18);
  for (int c = 0; c < 18; ++c) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = a(i, c);
    const auto colf = bandpass_zero_phase(col, f_low, f_high, sample_rate);
    for (std::size_t i = 0; i < n; ++i) af(i, c) = colf[i];
  }

  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y(i) = yf[i];

  TLCoefficients out;
  out.beta = solve_ls(af, y, ridge);
  out.residual_rms = std::sqrt((af * out.beta - y).squaredNorm() / n);
  return out;
}

VectorCalibration calibrate_vector(const std::vector<MagSample>& samples,
                                   const std::vector<Eigen::Vector3d>& b_e_vec_known,
                                   double ridge) {
  if (samples.size() != b_e_vec_known.size())
    throw std::invalid_argument("calibrate_vector: B_e length mismatch");
  if (samples.size() < 7)
    throw std::invalid_argument("calibrate_vector: need >= 7 samples");

  // Unknowns: [a(3), vec induced row-major(9), vec eddy row-major(9)].
  const std::size_t n = samples.size() - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3 * n, 21);
  Eigen::VectorXd y(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d be = b_e_vec_known[i + 1];
    const Eigen::Vector3d bed =
        finite_diff_mdot(b_e_vec_known[i + 1], b_e_vec_known[i], samples[i + 1].dt);
    for (int r = 0; r < 3; ++r) {
      a(3 * i + r, r) = 1.0;
      for (int c = 0; c < 3; ++c) {
        a(3 * i + r, 3 + 3 * r + c) = be(c);
        a(3 * i + r, 12 + 3 * r + c) = bed(c);
      }
    }
    y.segment<3>(3 * i) = samples[i + 1].m_vec - be;
  }

  VectorCalibration out;
  out.raw = solve_ls(a, y, ridge);

  const auto& v = out.raw;
  auto& beta = out.symmetrized.beta;
  beta.segment<3>(0) = v.segment<3>(0);
  // Fold the full induced matrix into the 6-parameter upper-triangular form.
  beta(3) = v(3);           // b1 = beta_11
  beta(4) = v(4) + v(6);    // b2 = beta_12 + beta_21
  beta(5) = v(5) + v(9);    // b3 = beta_13 + beta_31
  beta(6) = v(7);           // b4 = beta_22
  beta(7) = v(8) + v(10);   // b5 = beta_23 + beta_32
  beta(8) = v(11);          // b6 = beta_33
  beta.segment<9>(9) = v.segment<9>(12);
  out.symmetrized.residual_rms = std::sqrt((a * v - y).squaredNorm() / (3.0 * n));
  return out;
}

void save_tl_coefficients(const TLCoefficients& coeffs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tl_coefficients: cannot open " + path);
  out << "# magnav-tl v1\n";
  out.precision(17);
  for (int i = 0; i < 18; ++i) out << kLabels[i] << " " << coeffs.beta(i) << "\n";
}

TLCoefficients load_tl_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tl_coefficients: cannot open " + path);
  TLCoefficients out;
  std::string line;
  int i = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string label;
    double value;
    if (!(ss >> label >> value) || i >= 18 || label != kLabels[i])
      throw std::runtime_error("load_tl_coefficients: malformed file " + path);
    out.beta(i++) = value;
  }
  if (i != 18) throw std::runtime_error("load_tl_coefficients: expected 18 entries");
  return out;
}

}  // namespace magnav
