#include "magnav/nn.hpp"

#include <cmath>

#include "magnav/rng.hpp"

namespace magnav {

NetworkConfig NetworkConfig::plain(int n_inputs, int n_hidden, bool use_output_bias,
                                   double output_scale) {
  NetworkConfig cfg;
  cfg.n_inputs = n_inputs;
  cfg.n_hidden = n_hidden;
  cfg.use_output_bias = use_output_bias;
  cfg.output_scale = output_scale;
  cfg.input_offsets = Eigen::VectorXd::Zero(n_inputs);
  cfg.input_scales = Eigen::VectorXd::Ones(n_inputs);
  return cfg;
}

void NetworkConfig::validate() const {
  if (n_inputs < 1 || n_hidden < 1)
    throw std::invalid_argument("NetworkConfig: n_inputs and n_hidden must be >= 1");
  if (!(output_scale > 0.0))
    throw std::invalid_argument("NetworkConfig: output_scale must be > 0");
  if (input_offsets.size() != n_inputs || input_scales.size() != n_inputs)
    throw std::invalid_argument("NetworkConfig: offset/scale length != n_inputs");
  if ((input_scales.array() <= 0.0).any())
    throw std::invalid_argument("NetworkConfig: input_scales must be strictly positive");
}

Eigen::VectorXd pack(const NetworkWeights& w, const NetworkConfig& cfg) {
  const int nh = cfg.n_hidden, ni = cfg.n_inputs;
  Eigen::VectorXd v(cfg.param_count());
  v.head(nh * ni) = Eigen::Map<const Eigen::VectorXd>(w.w1.data(), nh * ni);
  v.segment(nh * ni, nh) = w.b1;
  v.segment(nh * ni + nh, nh) = w.w2;
  if (cfg.use_output_bias) v(v.size() - 1) = w.b2;
  return v;
}

NetworkWeights unpack(const Eigen::VectorXd& params, const NetworkConfig& cfg) {
  if (params.size() != cfg.param_count())
    throw std::invalid_argument("unpack: parameter vector length mismatch");
  const int nh = cfg.n_hidden, ni = cfg.n_inputs;
  NetworkWeights w;
  w.w1 = Eigen::Map<const Eigen::MatrixXd>(params.data(), nh, ni);
  w.b1 = params.segment(nh * ni, nh);
  w.w2 = params.segment(nh * ni + nh, nh);
  w.b2 = cfg.use_output_bias ? params(params.size() - 1) : 0.0;
  return w;
}

Eigen::VectorXd glorot_init(const NetworkConfig& cfg, double gain, std::uint64_t seed) {
  cfg.validate();
  if (!(gain >= 0.0)) throw std::invalid_argument("glorot_init: gain must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double sigma1 = gain * std::sqrt(2.0 / (cfg.n_inputs + cfg.n_hidden));
  const double sigma2 = gain * std::sqrt(2.0 / (cfg.n_hidden + 1));

  NetworkWeights w;
  w.w1.resize(cfg.n_hidden, cfg.n_inputs);
  for (int j = 0; j < cfg.n_inputs; ++j)
    for (int i = 0; i < cfg.n_hidden; ++i) w.w1(i, j) = sigma1 * normal(rng);
  w.b1 = Eigen::VectorXd::Zero(cfg.n_hidden);
  w.w2.resize(cfg.n_hidden);
  for (int i = 0; i < cfg.n_hidden; ++i) w.w2(i) = sigma2 * normal(rng);
  w.b2 = 0.0;
  return pack(w, cfg);
}

namespace {

Eigen::VectorXd normalize(const Eigen::VectorXd& raw, const NetworkConfig& cfg) {
  if (raw.size() != cfg.n_inputs)
    throw std::invalid_argument("nn: feature vector length != n_inputs");
  return (raw - cfg.input_offsets).cwiseQuotient(cfg.input_scales);
}

}  // namespace

double nn_forward(const Eigen::VectorXd& params, const Eigen::VectorXd& raw_features,
                  const NetworkConfig& cfg) {
  const NetworkWeights w = unpack(params, cfg);
  const Eigen::VectorXd phi = normalize(raw_features, cfg);
  const Eigen::VectorXd h = (w.w1 * phi + w.b1).array().tanh();
  return cfg.output_scale * (w.w2.dot(h) + w.b2);
}

Eigen::RowVectorXd nn_jacobian_params(const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& raw_features,
                                      const NetworkConfig& cfg) {
  const NetworkWeights w = unpack(params, cfg);
  const Eigen::VectorXd phi = normalize(raw_features, cfg);
  const Eigen::VectorXd t = (w.w1 * phi + w.b1).array().tanh();
  const Eigen::VectorXd dtanh = 1.0 - t.array().square();  // 1 - tanh^2(zeta)

  const int nh = cfg.n_hidden, ni = cfg.n_inputs;
  Eigen::RowVectorXd jac(cfg.param_count());
  // d/dW1(i,k) = w2_i (1 - tanh^2 zeta_i) phi_k, column-major like pack().
  for (int k = 0; k < ni; ++k)
    jac.segment(k * nh, nh) = (w.w2.array() * dtanh.array() * phi(k)).transpose();
  jac.segment(nh * ni, nh) = (w.w2.array() * dtanh.array()).transpose();
  jac.segment(nh * ni + nh, nh) = t.transpose();
  if (cfg.use_output_bias) jac(jac.size() - 1) = 1.0;
  return cfg.output_scale * jac;
}

Eigen::RowVectorXd nn_jacobian_inputs(const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& raw_features,
                                      const NetworkConfig& cfg) {
  const NetworkWeights w = unpack(params, cfg);
  const Eigen::VectorXd phi = normalize(raw_features, cfg);
  const Eigen::VectorXd t = (w.w1 * phi + w.b1).array().tanh();
  const Eigen::VectorXd dtanh = 1.0 - t.array().square();

  // d/dphi_k = sum_i w2_i (1 - tanh^2 zeta_i) W1(i,k); raw units need /scale_k.
  Eigen::RowVectorXd jac = (w.w2.array() * dtanh.array()).matrix().transpose() * w.w1;
  jac = jac.cwiseQuotient(cfg.input_scales.transpose());
  return cfg.output_scale * jac;
}

}  // namespace magnav
