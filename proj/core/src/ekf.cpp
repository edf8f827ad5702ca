#include "magnav/ekf.hpp"

namespace magnav {

namespace {

void check_dims(const GaussianState& s, const NoiseConfig& n) {
  if (s.cov.rows() != s.cov.cols() || s.cov.rows() != s.mean.size())
    throw std::invalid_argument("ekf: mean/covariance dimension mismatch");
  if (n.process_noise.rows() != s.dim() || n.process_noise.cols() != s.dim())
    throw std::invalid_argument("ekf: Q_d dimension mismatch");
}

}  // namespace

GaussianState predict_static(const GaussianState& state, const NoiseConfig& noise) {
  check_dims(state, noise);
  GaussianState out;
  out.mean = state.mean;
  out.cov = symmetrize(state.cov + noise.process_noise);
  return out;
}

GaussianState predict_linear(const GaussianState& state, const Eigen::MatrixXd& F,
                             const Eigen::MatrixXd& G, const Eigen::VectorXd& u,
                             const NoiseConfig& noise) {
  check_dims(state, noise);
  if (F.rows() != state.dim() || F.cols() != state.dim())
    throw std::invalid_argument("predict_linear: F dimension mismatch");
  if (G.rows() != state.dim() || G.cols() != u.size())
    throw std::invalid_argument("predict_linear: G/u dimension mismatch");
  GaussianState out;
  out.mean = F * state.mean + G * u;
  out.cov = symmetrize(F * state.cov * F.transpose() + noise.process_noise);
  return out;
}

std::pair<GaussianState, UpdateRecord> update_scalar(
    const GaussianState& state, double z, double predicted, const Eigen::RowVectorXd& H,
    const NoiseConfig& noise, const std::optional<GateConfig>& gate) {
  if (H.size() != state.dim())
    throw std::invalid_argument("update_scalar: H dimension mismatch");
  const double R = noise.measurement_variance;
  const double S = (H * state.cov * H.transpose())(0) + R;
  if (!(S > 0.0)) throw NumericalDegeneracy("update_scalar: S <= 0");

  const double nu = z - predicted;

  UpdateRecord rec;
  rec.innovation = nu;
  rec.innovation_variance = S;
  rec.nis = nu * nu / S;
  rec.kalman_gain = state.cov * H.transpose() / S;

  if (gate && gate->active && rec.nis > gate->threshold) {
    rec.gated = true;
    return {state, rec};
  }

  GaussianState out;
  out.mean = state.mean + rec.kalman_gain * nu;
  const Eigen::MatrixXd ikh =
      Eigen::MatrixXd::Identity(state.dim(), state.dim()) - rec.kalman_gain * H;
  if (noise.joseph_form) {
    out.cov = ikh * state.cov * ikh.transpose() +
              rec.kalman_gain * R * rec.kalman_gain.transpose();
  } else {
    out.cov = ikh * state.cov;
  }
  out.cov = symmetrize(out.cov);
  return {out, rec};
}

Eigen::MatrixXd apply_decoupling(const Eigen::MatrixXd& cov, const DecouplingSpec& spec) {
  const int n = static_cast<int>(cov.rows());
  if (spec.level == DecouplingLevel::FullyCoupled) return cov;
  if (spec.state_dim < 0 || spec.state_dim > n)
    throw std::invalid_argument("apply_decoupling: bad state_dim");

  // Validate that the parameter blocks partition [state_dim, n).
  int covered = spec.state_dim;
  for (const auto& [b, e] : spec.param_blocks) {
    if (b != covered || e < b || e > n)
      throw std::invalid_argument("apply_decoupling: blocks must partition the params");
    covered = e;
  }
  if (covered != n)
    throw std::invalid_argument("apply_decoupling: blocks must cover all params");

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  out.topLeftCorner(spec.state_dim, spec.state_dim) =
      cov.topLeftCorner(spec.state_dim, spec.state_dim);

  switch (spec.level) {
    case DecouplingLevel::StateModel: {
      // One dense block for all parameters.
      const int p = n - spec.state_dim;
      out.bottomRightCorner(p, p) = cov.bottomRightCorner(p, p);
      break;
    }
    case DecouplingLevel::LayerWise:
      for (const auto& [b, e] : spec.param_blocks)
        out.block(b, b, e - b, e - b) = cov.block(b, b, e - b, e - b);
      break;
    case DecouplingLevel::FullDiagonalParams:
      for (int i = spec.state_dim; i < n; ++i) out(i, i) = cov(i, i);
      break;
    default:
      break;
  }
  return symmetrize(out);
}

double ng_identity_residual(const GaussianState& prior, const Eigen::RowVectorXd& H,
                            const NoiseConfig& noise) {
  const double R = noise.measurement_variance;
  const double S = (H * prior.cov * H.transpose())(0) + R;
  if (!(S > 0.0)) throw NumericalDegeneracy("ng_identity_residual: S <= 0");

  const Eigen::VectorXd K = prior.cov * H.transpose() / S;
  const Eigen::MatrixXd post =
      symmetrize((Eigen::MatrixXd::Identity(prior.dim(), prior.dim()) - K * H) *
                 prior.cov);
  const Eigen::VectorXd lhs = K * R;
  const Eigen::VectorXd rhs = post * H.transpose();
  const double denom = rhs.norm();
  if (denom == 0.0) return 0.0;
  return (lhs - rhs).norm() / denom;
}

Eigen::VectorXd update_as_preconditioned_gradient(const GaussianState& prior, double z,
                                                  double predicted,
                                                  const Eigen::RowVectorXd& H,
                                                  const NoiseConfig& noise) {
  const double R = noise.measurement_variance;
  const double S = (H * prior.cov * H.transpose())(0) + R;
  if (!(S > 0.0)) throw NumericalDegeneracy("gradient update: S <= 0");

  const Eigen::VectorXd K = prior.cov * H.transpose() / S;
  const Eigen::MatrixXd post =
      symmetrize((Eigen::MatrixXd::Identity(prior.dim(), prior.dim()) - K * H) *
                 prior.cov);
  // dx = P_post H^T R^-1 nu, the NLL gradient step preconditioned by P_post.
  return post * H.transpose() * ((z - predicted) / R);
}

}  // namespace magnav
