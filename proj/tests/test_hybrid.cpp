#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "magnav/hybrid.hpp"
#include "magnav/rng.hpp"
#include "test_util.hpp"

using namespace magnav;
using magnav::testing::rel_error;

namespace {

HybridModel make_model(int n_hidden = 3, double alpha = 400.0) {
  HybridModel m;
  m.net = NetworkConfig::plain(4, n_hidden, /*use_output_bias=*/false, alpha);
  m.net.input_offsets << 0.0, 0.0, 0.0, 50000.0;
  m.net.input_scales << 50000.0, 50000.0, 50000.0, 50000.0;
  m.nn_params = Eigen::VectorXd::Zero(m.net.param_count());
  return m;
}

MagSample sample() {
  MagSample s;
  s.m_vec = {25000.0, -15000.0, 37000.0};
  s.m_scalar = 49000.0;
  s.m_dot = {8.0, -3.0, 5.0};
  return s;
}

}  // namespace

TEST_CASE("hybrid_predict: zero model, additivity, bias passthrough") {
  HybridModel m = make_model();
  CHECK(hybrid_predict(sample(), m) == 0.0);

  m.tl = default_tl_truth();
  m.bias_cb = 7.0;
  const double tl_only = tl_predict(sample(), m.tl);
  CHECK(hybrid_predict(sample(), m) ==
        doctest::Approx(tl_only + 7.0).epsilon(1e-14));

  // Decomposition to 1e-12 with a non-trivial network too.
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (int i = 0; i < m.nn_params.size(); ++i) m.nn_params(i) = normal(rng);
  const double nn_only = nn_forward(
      m.nn_params,
      Eigen::Vector4d(sample().m_vec.x(), sample().m_vec.y(), sample().m_vec.z(),
                      sample().m_scalar),
      m.net);
  CHECK(std::abs(hybrid_predict(sample(), m) - (tl_only + nn_only + 7.0)) < 1e-12);
}

TEST_CASE("hybrid_jacobian: structural blocks") {
  HybridModel m = make_model();
  m.tl = default_tl_truth();
  const HybridJacobian j = hybrid_jacobian(sample(), m);

  CHECK(j.d_bias == 1.0);
  CHECK((j.d_tl - build_a_row(sample())).cwiseAbs().maxCoeff() == 0.0);
  // Zero network parameters: the input sensitivity reduces to the TL partials.
  CHECK((j.d_mvec - tl_jacobian_vector_mag(sample(), m.tl)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(j.d_nn.size() == m.net.param_count());
}

TEST_CASE("hybrid_jacobian: full row matches finite differences") {
  Rng rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    HybridModel m = make_model(2 + trial % 4);
    for (int i = 0; i < 18; ++i) m.tl.beta(i) = 0.01 * normal(rng);
    m.tl.beta.head<3>() *= 1000.0;
    m.bias_cb = normal(rng);
    for (int i = 0; i < m.nn_params.size(); ++i) m.nn_params(i) = 0.3 * normal(rng);

    MagSample s;
    s.m_vec = 20000.0 * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    while (s.m_vec.norm() < 1000.0) s.m_vec *= 10.0;
    s.m_scalar = 45000.0 + 5000.0 * std::abs(normal(rng));
    s.m_dot = 10.0 * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));

    const HybridJacobian j = hybrid_jacobian(s, m);

    // TL/bias/NN parameter blocks: central differences of hybrid_predict.
    Eigen::VectorXd fd_tl(18);
    for (int i = 0; i < 18; ++i) {
      HybridModel hi = m, lo = m;
      const double step = 1e-4;
      hi.tl.beta(i) += step;
      lo.tl.beta(i) -= step;
      fd_tl(i) = (hybrid_predict(s, hi) - hybrid_predict(s, lo)) / (2.0 * step);
    }
    worst = std::max(worst, rel_error(j.d_tl.transpose(), fd_tl));

    Eigen::VectorXd fd_nn(m.nn_params.size());
    for (int i = 0; i < m.nn_params.size(); ++i) {
      HybridModel hi = m, lo = m;
      const double step = 1e-6;
      hi.nn_params(i) += step;
      lo.nn_params(i) -= step;
      fd_nn(i) = (hybrid_predict(s, hi) - hybrid_predict(s, lo)) / (2.0 * step);
    }
    worst = std::max(worst, rel_error(j.d_nn.transpose(), fd_nn));

    {
      HybridModel hi = m, lo = m;
      hi.bias_cb += 1e-3;
      lo.bias_cb -= 1e-3;
      const double fd_b =
          (hybrid_predict(s, hi) - hybrid_predict(s, lo)) / 2e-3;
      worst = std::max(worst, std::abs(j.d_bias - fd_b));
    }

    // m_vec block under the documented convention: TL partials over the
    // bilinear form in B (Bhat = B/B_t, B_t fixed, base point B_t*Bhat) plus
    // the NN's sensitivity to its first three raw features (base point the
    // raw m_vec), at fixed m_scalar. Each part is perturbed around its own
    // base point, matching the analytic sum.
    auto reduced = [&](const Eigen::Vector3d& d) {
      const Eigen::Vector3d b_field = s.m_scalar * s.m_vec.normalized() + d;
      const Eigen::Vector3d bh = b_field / s.m_scalar;
      const auto& p = m.tl.beta;
      double out = bh.dot(p.segment<3>(0));
      out += b_field.x() * bh.x() * p(3) + b_field.x() * bh.y() * p(4) +
             b_field.x() * bh.z() * p(5) + b_field.y() * bh.y() * p(6) +
             b_field.y() * bh.z() * p(7) + b_field.z() * bh.z() * p(8);
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col)
          out += s.m_dot(r) * bh(col) * p(9 + 3 * r + col);
      const Eigen::Vector3d nn_in = s.m_vec + d;
      return out + nn_forward(m.nn_params,
                              Eigen::Vector4d(nn_in.x(), nn_in.y(), nn_in.z(),
                                              s.m_scalar),
                              m.net);
    };
    Eigen::Vector3d fd_m;
    for (int ax = 0; ax < 3; ++ax) {
      Eigen::Vector3d hi = Eigen::Vector3d::Zero(), lo = Eigen::Vector3d::Zero();
      const double step = 1e-2;
      hi(ax) += step;
      lo(ax) -= step;
      fd_m(ax) = (reduced(hi) - reduced(lo)) / (2.0 * step);
    }
    worst = std::max(worst, rel_error(j.d_mvec, fd_m));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("warm payload: save/load round trip and checksum enforcement") {
  WarmPayload p;
  p.tl_beta = default_tl_truth().beta;
  p.bias_cb = 3.5;
  p.nn_params = Eigen::VectorXd::LinSpaced(11, -1.0, 1.0);
  const int n = 19 + 11;
  p.cov = Eigen::MatrixXd::Identity(n, n) * 0.25;
  p.cov(0, 5) = p.cov(5, 0) = 0.125;

  const std::string path = "/tmp/magnav_test_warm_payload.txt";
  save_warm_payload(p, path);
  const WarmPayload back = load_warm_payload(path);
  CHECK((back.tl_beta - p.tl_beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.bias_cb == p.bias_cb);
  CHECK((back.nn_params - p.nn_params).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.cov - p.cov).cwiseAbs().maxCoeff() == 0.0);

  // Corrupting the body must fail the checksum.
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  in.close();
  const auto pos = content.find("cb 3.5");
  REQUIRE(pos != std::string::npos);
  content[pos + 3] = '4';
  std::ofstream out(path);
  out << content;
  out.close();
  CHECK_THROWS_WITH_AS((void)load_warm_payload(path),
                       doctest::Contains("checksum"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("cold-start calibration learns a TL-only truth") {
  HybridSimConfig cfg;
  cfg.duration = 300.0;
  cfg.residual_amplitude = 0.0;  // pure TL truth
  cfg.sigma_meas = 1e-6;         // effectively noiseless
  cfg.r = 1e-4;
  cfg.seed = 3;

  const HybridRunResult run = run_hybrid_calibration(cfg, StartMode{});
  CHECK_FALSE(run.diverged);
  CHECK(run.final_rmse < 0.05);
  // Permanent terms are strongly excited; they must be recovered well.
  CHECK((run.tl_estimate.head<3>() - cfg.tl_truth.beta.head<3>())
            .cwiseAbs()
            .maxCoeff() < 1.0);
}

TEST_CASE("decomposition and residual-learner invariants hold on a default run") {
  HybridSimConfig cfg;
  cfg.duration = 240.0;
  cfg.seed = 4;
  const HybridRunResult run = run_hybrid_calibration(cfg, StartMode{});
  REQUIRE_FALSE(run.t.empty());

  double mean_tl = 0.0, mean_nn = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < run.t.size(); ++k) {
    worst = std::max(worst, std::abs(run.tl_output[k] + run.nn_output[k] +
                                     run.bias_output[k] - run.platform_model[k]));
    mean_tl += std::abs(run.tl_output[k]);
    mean_nn += std::abs(run.nn_output[k]);
  }
  CHECK(worst < 1e-12);
  CHECK(mean_nn < mean_tl);  // the network stays a residual learner
  CHECK(run.nn_output_max_abs <= 3.0 * cfg.nn_alpha);
}

TEST_CASE("warm start resumes at the cold run's converged accuracy") {
  HybridSimConfig cfg;
  cfg.duration = 400.0;
  cfg.seed = 5;
  const HybridRunResult cold = run_hybrid_calibration(cfg, StartMode{});
  REQUIRE_FALSE(cold.diverged);

  const std::string path = "/tmp/magnav_test_warm_chain.txt";
  save_warm_payload(cold.as_warm_payload(), path);

  HybridSimConfig warm_cfg = cfg;
  warm_cfg.seed = 6;  // fresh noise realization
  StartMode warm;
  warm.kind = StartKind::Warm;
  warm.warm = load_warm_payload(path);
  const HybridRunResult rewarm = run_hybrid_calibration(warm_cfg, warm);

  // RMSE over the warm run's first full window <= 2x the cold run's
  // converged RMSE (a single-sample "initial" value would just measure one
  // noise draw).
  const std::size_t first_window =
      std::min<std::size_t>(rewarm.calib_rmse_window.size() - 1,
                            static_cast<std::size_t>(60.0 / warm_cfg.dt) - 1);
  const double warm_initial = rewarm.calib_rmse_window[first_window];
  const double cold_converged = cold.calib_rmse_window.back();
  CHECK(warm_initial <= 2.0 * cold_converged + 1e-9);

  // Reloading the payload reproduces the warm run bit-exactly.
  StartMode warm2;
  warm2.kind = StartKind::Warm;
  warm2.warm = load_warm_payload(path);
  const HybridRunResult again = run_hybrid_calibration(warm_cfg, warm2);
  CHECK(again.platform_model == rewarm.platform_model);
  std::remove(path.c_str());
}
