#pragma once

#include <Eigen/Dense>
#include <vector>

namespace magnav {

/// Fisher information over the augmented state, same ordering as the filter.
struct FisherState {
  Eigen::MatrixXd J;
};

/// Information-form time update: J' = (F J^-1 F^T + Q)^-1. When J is
/// numerically singular, a jitter of 1e-12 * trace/n is added to the diagonal
/// (if enabled) and the step is flagged.
struct FimPredictOptions {
  bool allow_jitter = true;
};

FisherState fim_predict(const FisherState& prior, const Eigen::MatrixXd& F,
                        const Eigen::MatrixXd& Q,
                        const FimPredictOptions& opts = {},
                        bool* jittered = nullptr);

/// Information-form measurement update: J' = J + H^T R^-1 H (scalar R).
FisherState fim_update(const FisherState& prior, const Eigen::RowVectorXd& H,
                       double measurement_variance);

/// Per-step position lower bound from a recorded measurement-Jacobian
/// sequence: sqrt(trace of the 2x2 position block of J_t^-1).
struct CrlbSeries {
  std::vector<double> position_bound;  // m, one entry per step
  std::vector<bool> jittered;          // steps where inversion needed jitter
};

CrlbSeries crlb_trace(const std::vector<Eigen::RowVectorXd>& h_rows,
                      const Eigen::MatrixXd& F, const Eigen::MatrixXd& Q,
                      double measurement_variance, const Eigen::MatrixXd& j0);

}  // namespace magnav
