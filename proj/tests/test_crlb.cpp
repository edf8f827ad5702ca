#include <cmath>

#include "doctest.h"
#include "magnav/crlb.hpp"
#include "magnav/ekf.hpp"
#include "magnav/rng.hpp"

using namespace magnav;

namespace {

Eigen::MatrixXd scalar_m(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

TEST_CASE("fim_predict: hand arithmetic") {
  FisherState j{scalar_m(1.0)};

  // F = I, Q = 0: unchanged.
  const FisherState same = fim_predict(j, scalar_m(1.0), scalar_m(0.0));
  CHECK(same.J(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // J = 1, F = 1, Q = 1: J' = 1/(1 + 1) = 1/2.
  const FisherState half = fim_predict(j, scalar_m(1.0), scalar_m(1.0));
  CHECK(half.J(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  // F = 2, J = 1, Q = 0: J' = (4*1)^-1 = 1/4.
  const FisherState quarter = fim_predict(j, scalar_m(2.0), scalar_m(0.0));
  CHECK(quarter.J(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("fim_predict: singular J without jitter is an error; with jitter flagged") {
  FisherState j{scalar_m(0.0)};
  FimPredictOptions no_jitter{false};
  CHECK_THROWS((void)fim_predict(j, scalar_m(1.0), scalar_m(0.0), no_jitter));

  bool jittered = false;
  // trace = 0, so jitter falls back to an absolute floor; the call must
  // succeed and flag the step.
  FisherState fixed =
      fim_predict(FisherState{scalar_m(0.0)}, scalar_m(1.0), scalar_m(1.0), {},
                  &jittered);
  CHECK(jittered);
  CHECK(std::isfinite(fixed.J(0, 0)));
}

TEST_CASE("fim_update: H = 0 unchanged; scalar increment; monotone") {
  FisherState j{scalar_m(2.0)};
  const FisherState same = fim_update(j, Eigen::RowVectorXd::Zero(1), 0.5);
  CHECK(same.J(0, 0) == 2.0);

  const FisherState more = fim_update(j, Eigen::RowVectorXd::Ones(1), 0.25);
  CHECK(more.J(0, 0) == doctest::Approx(6.0).epsilon(1e-14));  // 2 + 1/0.25

  // Information monotonicity: J' - J is PSD for any H.
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const int n = 3;
    Eigen::MatrixXd a =
        Eigen::MatrixXd::NullaryExpr(n, n, [&](int, int) { return normal(rng); });
    FisherState prior{a * a.transpose()};
    Eigen::RowVectorXd h =
        Eigen::RowVectorXd::NullaryExpr(n, [&](int) { return normal(rng); });
    const Eigen::MatrixXd diff = fim_update(prior, h, 0.7).J - prior.J;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("recursion matches a brute-force batch FIM on a 3-state, 10-step system") {
  // Constructed linear-Gaussian system with Q = 0 so the batch FIM is the
  // exact sum of prior + per-step measurement information mapped through F.
  const int n = 3, steps = 10;
  Rng rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd f(n, n);
  f << 1.0, 0.1, 0.0,
       0.0, 1.0, 0.1,
       0.0, 0.0, 1.0;
  const double r = 0.3;
  Eigen::MatrixXd j0 = Eigen::MatrixXd::Identity(n, n) * 2.0;

  std::vector<Eigen::RowVectorXd> h_rows;
  for (int k = 0; k < steps; ++k)
    h_rows.push_back(
        Eigen::RowVectorXd::NullaryExpr(n, [&](int) { return normal(rng); }));

  // Recursive evaluation.
  FisherState j{j0};
  const Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < steps; ++k) {
    j = fim_predict(j, f, q);
    j = fim_update(j, h_rows[k], r);
  }

  // Batch assembly: information about x_T. With x_T = F^(T-k) x_k,
  // J_T = F^-T_total J0 F^-1_total + sum_k (H_k F^-(T-k))^T R^-1 (H_k F^-(T-k))
  // expressed directly on x_T via back-propagated Jacobians.
  const Eigen::MatrixXd f_inv = f.inverse();
  Eigen::MatrixXd batch = Eigen::MatrixXd::Zero(n, n);
  {
    Eigen::MatrixXd back = Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < steps; ++k) back *= f_inv;  // x_0 = F^-steps x_T
    batch += back.transpose() * j0 * back;
  }
  for (int k = 0; k < steps; ++k) {
    Eigen::MatrixXd back = Eigen::MatrixXd::Identity(n, n);
    for (int i = k + 1; i < steps; ++i) back *= f_inv;  // x_{k+1} from x_T
    const Eigen::RowVectorXd h_t = h_rows[k] * back;
    batch += h_t.transpose() * h_t / r;
  }

  CHECK((j.J - batch).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("linear case: EKF posterior covariance equals J^-1 at every step") {
  const int n = 3;
  Rng rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd f = Eigen::MatrixXd::Identity(n, n);
  f(0, 1) = 0.05;
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(n, n) * 0.01;
  const double r = 0.5;

  GaussianState state;
  state.mean = Eigen::VectorXd::Zero(n);
  state.cov = Eigen::MatrixXd::Identity(n, n) * 4.0;
  FisherState j{state.cov.inverse()};

  NoiseConfig noise;
  noise.process_noise = q;
  noise.measurement_variance = r;

  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Eigen::RowVectorXd h =
        Eigen::RowVectorXd::NullaryExpr(n, [&](int) { return normal(rng); });
    state = predict_linear(state, f, Eigen::MatrixXd::Zero(n, 1),
                           Eigen::VectorXd::Zero(1), noise);
    j = fim_predict(j, f, q);
    state = update_scalar(state, normal(rng), 0.0, h, noise).first;
    j = fim_update(j, h, r);
    worst = std::max(worst, (state.cov - j.J.inverse()).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("crlb_trace: constant bound with no dynamics or information") {
  const int n = 4;  // 2 position + 2 parameters
  Eigen::MatrixXd j0 = Eigen::MatrixXd::Identity(n, n);
  j0(0, 0) = j0(1, 1) = 0.25;  // position variance 4 each
  std::vector<Eigen::RowVectorXd> h(20, Eigen::RowVectorXd::Zero(n));

  const CrlbSeries series =
      crlb_trace(h, Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n),
                 1.0, j0);
  REQUIRE(series.position_bound.size() == 20);
  for (double b : series.position_bound)
    CHECK(b == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
}

TEST_CASE("crlb_trace: denser information gives a pointwise smaller bound") {
  const int n = 3;
  Rng rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::RowVectorXd> weak, strong;
  for (int k = 0; k < 30; ++k) {
    Eigen::RowVectorXd h =
        Eigen::RowVectorXd::NullaryExpr(n, [&](int) { return normal(rng); });
    weak.push_back(h);
    strong.push_back(3.0 * h);
  }
  const Eigen::MatrixXd f = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd q = 0.01 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd j0 = Eigen::MatrixXd::Identity(n, n);

  const CrlbSeries a = crlb_trace(weak, f, q, 1.0, j0);
  const CrlbSeries b = crlb_trace(strong, f, q, 1.0, j0);
  for (std::size_t k = 0; k < a.position_bound.size(); ++k)
    CHECK(b.position_bound[k] <= a.position_bound[k] + 1e-12);
}

TEST_CASE("augmented-parameter bound dominates the parameter-free bound") {
  // Same position information; the augmented system shares the measurement
  // with unknown parameters, which can only raise the position bound.
  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int steps = 40;

  std::vector<Eigen::RowVectorXd> h2, h4;
  for (int k = 0; k < steps; ++k) {
    const double hx = normal(rng), hy = normal(rng);
    Eigen::RowVectorXd a(2);
    a << hx, hy;
    Eigen::RowVectorXd b(4);
    b << hx, hy, normal(rng), normal(rng);
    h2.push_back(a);
    h4.push_back(b);
  }

  const double q = 0.05, r = 0.4, p0 = 2.0, p0p = 100.0;
  const Eigen::MatrixXd f2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd q2 = q * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd j02 = (1.0 / p0) * Eigen::MatrixXd::Identity(2, 2);

  Eigen::MatrixXd f4 = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd q4 = Eigen::MatrixXd::Zero(4, 4);
  q4.topLeftCorner(2, 2) = q2;
  Eigen::MatrixXd j04 = Eigen::MatrixXd::Zero(4, 4);
  j04.topLeftCorner(2, 2) = j02;
  j04(2, 2) = j04(3, 3) = 1.0 / p0p;

  const CrlbSeries bare = crlb_trace(h2, f2, q2, r, j02);
  const CrlbSeries aug = crlb_trace(h4, f4, q4, r, j04);
  for (std::size_t k = 0; k < bare.position_bound.size(); ++k)
    CHECK(aug.position_bound[k] >= bare.position_bound[k] - 1e-12);
}
