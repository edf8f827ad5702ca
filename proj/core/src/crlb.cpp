#include "magnav/crlb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace magnav {

namespace {

// Inverse with a diagnosed fallback: retry with diagonal jitter when the
// plain factorization is not usable.
Eigen::MatrixXd robust_inverse(const Eigen::MatrixXd& m, bool allow_jitter,
                               bool* jittered) {
  const int n = static_cast<int>(m.rows());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > 0.0) {
    return ldlt.solve(Eigen::MatrixXd::Identity(n, n));
  }
  if (!allow_jitter)
    throw std::runtime_error("fim: singular information matrix and jitter disabled");
  if (jittered) *jittered = true;
  const double eps = 1e-12 * m.trace() / n;
  Eigen::MatrixXd jm = m + std::max(eps, 1e-300) * Eigen::MatrixXd::Identity(n, n);
  return Eigen::LDLT<Eigen::MatrixXd>(jm).solve(Eigen::MatrixXd::Identity(n, n));
}

Eigen::MatrixXd symm(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace

FisherState fim_predict(const FisherState& prior, const Eigen::MatrixXd& F,
                        const Eigen::MatrixXd& Q, const FimPredictOptions& opts,
                        bool* jittered) {
  Eigen::MatrixXd p = F * robust_inverse(prior.J, opts.allow_jitter, jittered) *
                          F.transpose() +
                      Q;
  FisherState out;
  out.J = symm(robust_inverse(symm(p), opts.allow_jitter, jittered));
  return out;
}

FisherState fim_update(const FisherState& prior, const Eigen::RowVectorXd& H,
                       double measurement_variance) {
  if (measurement_variance <= 0.0)
    throw std::invalid_argument("fim_update: measurement variance must be > 0");
  FisherState out;
  out.J = symm(prior.J + H.transpose() * H / measurement_variance);
  return out;
}

CrlbSeries crlb_trace(const std::vector<Eigen::RowVectorXd>& h_rows,
                      const Eigen::MatrixXd& F, const Eigen::MatrixXd& Q,
                      double measurement_variance, const Eigen::MatrixXd& j0) {
  const int n = static_cast<int>(j0.rows());
  if (n < 2) throw std::invalid_argument("crlb_trace: need a 2-D position block");
  for (const auto& h : h_rows)
    if (h.size() != n)
      throw std::invalid_argument("crlb_trace: Jacobian row dimension mismatch");

  CrlbSeries series;
  series.position_bound.reserve(h_rows.size());
  series.jittered.reserve(h_rows.size());

  FisherState fim{symm(j0)};
  for (const auto& h : h_rows) {
    bool jit = false;
    fim = fim_predict(fim, F, Q, {}, &jit);
    fim = fim_update(fim, h, measurement_variance);
    Eigen::MatrixXd cov = robust_inverse(fim.J, true, &jit);
    series.position_bound.push_back(std::sqrt(cov(0, 0) + cov(1, 1)));
    series.jittered.push_back(jit);
  }
  return series;
}

}  // namespace magnav
