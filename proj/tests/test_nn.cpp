#include <cmath>

#include "doctest.h"
#include "magnav/nn.hpp"
#include "magnav/rng.hpp"
#include "test_util.hpp"

using namespace magnav;
using magnav::testing::central_diff;
using magnav::testing::rel_error;

namespace {

NetworkConfig tiny_config() {
  // n_in=1, N_h=1, no output bias, identity normalization.
  NetworkConfig cfg = NetworkConfig::plain(1, 1, /*use_output_bias=*/false);
  return cfg;
}

Eigen::VectorXd random_params(const NetworkConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd p(cfg.param_count());
  for (int i = 0; i < p.size(); ++i) p(i) = normal(rng);
  return p;
}

}  // namespace

TEST_CASE("param_count covers every layout variant") {
  CHECK(NetworkConfig::plain(1, 1, true).param_count() == 4);
  CHECK(NetworkConfig::plain(1, 1, false).param_count() == 3);
  CHECK(NetworkConfig::plain(3, 8, false).param_count() == 3 * 8 + 8 + 8);
  CHECK(NetworkConfig::plain(5, 8, true).param_count() == 5 * 8 + 8 + 8 + 1);
}

TEST_CASE("glorot_init: zero gain gives the all-zero vector") {
  const NetworkConfig cfg = NetworkConfig::plain(1, 1);
  const Eigen::VectorXd p = glorot_init(cfg, 0.0, 7);
  CHECK(p.size() == cfg.param_count());
  CHECK(p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("glorot_init: deterministic per seed, different across seeds") {
  const NetworkConfig cfg = NetworkConfig::plain(3, 8);
  const Eigen::VectorXd a = glorot_init(cfg, 1e-2, 42);
  const Eigen::VectorXd b = glorot_init(cfg, 1e-2, 42);
  const Eigen::VectorXd c = glorot_init(cfg, 1e-2, 43);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("glorot_init: layer std matches gain*sqrt(2/(fan_in+fan_out)), biases zero") {
  const NetworkConfig cfg = NetworkConfig::plain(3, 8);
  const double gain = 1e-2;
  const double sigma_w1 = gain * std::sqrt(2.0 / (3 + 8));
  const double sigma_w2 = gain * std::sqrt(2.0 / (8 + 1));

  double ss1 = 0.0, ss2 = 0.0;
  int n1 = 0, n2 = 0;
  for (std::uint64_t seed = 0; seed < 800; ++seed) {
    const NetworkWeights w = unpack(glorot_init(cfg, gain, seed), cfg);
    CHECK(w.b1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(w.b2 == 0.0);
    ss1 += w.w1.squaredNorm();
    n1 += static_cast<int>(w.w1.size());
    ss2 += w.w2.squaredNorm();
    n2 += static_cast<int>(w.w2.size());
  }
  CHECK(std::sqrt(ss1 / n1) == doctest::Approx(sigma_w1).epsilon(0.02));
  CHECK(std::sqrt(ss2 / n2) == doctest::Approx(sigma_w2).epsilon(0.02));
}

TEST_CASE("forward: zero parameters give zero output") {
  const NetworkConfig cfg = NetworkConfig::plain(3, 4);
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(cfg.param_count());
  CHECK(nn_forward(p, Eigen::Vector3d(1.0, -2.0, 0.5), cfg) == 0.0);
}

TEST_CASE("forward: scalar oracle 2*tanh(0.5)") {
  const NetworkConfig cfg = tiny_config();
  Eigen::VectorXd p(3);
  p << 1.0, 0.0, 2.0;  // W1=1, b1=0, W2=2
  Eigen::VectorXd x(1);
  x << 0.5;
  CHECK(nn_forward(p, x, cfg) == doctest::Approx(0.9242343145).epsilon(1e-9));
}

TEST_CASE("forward: linear in the output scale alpha") {
  NetworkConfig cfg = NetworkConfig::plain(2, 3);
  Rng rng(5);
  const Eigen::VectorXd p = random_params(cfg, rng);
  const Eigen::Vector2d x(0.3, -0.7);
  const double base = nn_forward(p, x, cfg);
  cfg.output_scale = 2.0;
  CHECK(nn_forward(p, x, cfg) == doctest::Approx(2.0 * base).epsilon(1e-14));
}

TEST_CASE("forward: exactly linear in (W2, b2) jointly") {
  const NetworkConfig cfg = NetworkConfig::plain(2, 3, /*use_output_bias=*/true);
  Rng rng(11);
  Eigen::VectorXd p = random_params(cfg, rng);
  const Eigen::Vector2d x(0.4, 1.1);
  const double base = nn_forward(p, x, cfg);

  NetworkWeights w = unpack(p, cfg);
  w.w2 *= 3.0;
  w.b2 *= 3.0;
  CHECK(nn_forward(pack(w, cfg), x, cfg) == doctest::Approx(3.0 * base).epsilon(1e-13));
}

TEST_CASE("pack/unpack round trip is the identity; mismatched length throws") {
  const NetworkConfig cfg = NetworkConfig::plain(3, 5);
  Rng rng(3);
  const Eigen::VectorXd p = random_params(cfg, rng);
  CHECK((pack(unpack(p, cfg), cfg) - p).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd wrong(cfg.param_count() + 1);
  wrong.setZero();
  CHECK_THROWS_AS((void)unpack(wrong, cfg), std::invalid_argument);
}

TEST_CASE("jacobian_params: b2 entry is always 1 at alpha=1") {
  const NetworkConfig cfg = NetworkConfig::plain(2, 3, /*use_output_bias=*/true);
  Rng rng(9);
  const Eigen::VectorXd p = random_params(cfg, rng);
  const Eigen::RowVectorXd j = nn_jacobian_params(p, Eigen::Vector2d(0.2, 0.8), cfg);
  CHECK(j(j.size() - 1) == 1.0);
}

TEST_CASE("jacobian_params: zero-parameter structure") {
  const NetworkConfig cfg = NetworkConfig::plain(1, 2, /*use_output_bias=*/true);
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(cfg.param_count());
  Eigen::VectorXd x(1);
  x << 0.7;
  const Eigen::RowVectorXd j = nn_jacobian_params(p, x, cfg);
  // Layout [W1(2), b1(2), W2(2), b2]: with all-zero parameters the only
  // nonzero sensitivity is the output bias.
  for (int i = 0; i < 6; ++i) CHECK(j(i) == 0.0);
  CHECK(j(6) == 1.0);
}

TEST_CASE("jacobian_inputs: scalar oracle and chain rule through the scale") {
  NetworkConfig cfg = tiny_config();
  cfg.input_offsets << 0.3;
  cfg.input_scales << 2.0;
  Eigen::VectorXd p(3);
  p << 1.0, 0.0, 2.0;
  Eigen::VectorXd raw(1);
  raw << 1.3;  // normalized value (1.3 - 0.3)/2 = 0.5
  const double expect = 2.0 * (1.0 - std::tanh(0.5) * std::tanh(0.5)) / 2.0;
  CHECK(nn_jacobian_inputs(p, raw, cfg)(0) ==
        doctest::Approx(expect).epsilon(1e-12));

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(cfg.param_count());
  CHECK(nn_jacobian_inputs(zero, raw, cfg).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("both Jacobians match central finite differences over random draws") {
  Rng rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    NetworkConfig cfg = NetworkConfig::plain(1 + trial % 4, 1 + trial % 7,
                                             trial % 2 == 0, 1.0 + trial % 3);
    for (int i = 0; i < cfg.n_inputs; ++i) {
      cfg.input_offsets(i) = normal(rng);
      cfg.input_scales(i) = 0.5 + std::abs(normal(rng));
    }
    const Eigen::VectorXd p = random_params(cfg, rng);
    Eigen::VectorXd x(cfg.n_inputs);
    for (int i = 0; i < x.size(); ++i) x(i) = normal(rng);

    const Eigen::VectorXd fd_p = central_diff(
        [&](const Eigen::VectorXd& q) { return nn_forward(q, x, cfg); }, p);
    const Eigen::VectorXd fd_x = central_diff(
        [&](const Eigen::VectorXd& f) { return nn_forward(p, f, cfg); }, x);

    worst = std::max(worst,
                     rel_error(nn_jacobian_params(p, x, cfg).transpose(), fd_p));
    worst = std::max(worst,
                     rel_error(nn_jacobian_inputs(p, x, cfg).transpose(), fd_x));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("forward is invariant under a consistent affine re-normalization") {
  NetworkConfig cfg = NetworkConfig::plain(2, 3);
  cfg.input_offsets << 0.5, -1.0;
  cfg.input_scales << 2.0, 0.7;
  Rng rng(17);
  const Eigen::VectorXd p = random_params(cfg, rng);
  const Eigen::Vector2d raw(1.2, -0.4);
  const double base = nn_forward(p, raw, cfg);

  const double a = 3.5, b = -2.0;
  NetworkConfig cfg2 = cfg;
  cfg2.input_offsets = a * cfg.input_offsets + Eigen::Vector2d::Constant(b);
  cfg2.input_scales = a * cfg.input_scales;
  const Eigen::Vector2d raw2 = a * raw + Eigen::Vector2d::Constant(b);
  CHECK(nn_forward(p, raw2, cfg2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("config validation rejects bad normalization and sizes") {
  NetworkConfig cfg = NetworkConfig::plain(2, 3);
  cfg.input_scales(1) = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  const NetworkConfig ok = NetworkConfig::plain(2, 3);
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(ok.param_count());
  CHECK_THROWS_AS((void)nn_forward(p, Eigen::Vector3d::Zero(), ok),
                  std::invalid_argument);
}
