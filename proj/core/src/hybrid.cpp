#include "magnav/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "magnav/csv.hpp"
#include "magnav/rng.hpp"

namespace magnav {

void HybridModel::validate() const {
  net.validate();
  if (net.n_inputs != 4)
    throw std::invalid_argument("HybridModel: NN feature count must be 4");
  if (nn_params.size() != net.param_count())
    throw std::invalid_argument("HybridModel: parameter vector length mismatch");
}

namespace {

Eigen::Vector4d hybrid_features(const MagSample& sample) {
  return {sample.m_vec.x(), sample.m_vec.y(), sample.m_vec.z(), sample.m_scalar};
}

}  // namespace

double hybrid_predict(const MagSample& sample, const HybridModel& model) {
  return tl_predict(sample, model.tl) +
         nn_forward(model.nn_params, hybrid_features(sample), model.net) +
         model.bias_cb;
}

HybridJacobian hybrid_jacobian(const MagSample& sample, const HybridModel& model) {
  HybridJacobian jac;
  jac.d_tl = build_a_row(sample);
  jac.d_bias = 1.0;
  jac.d_nn = nn_jacobian_params(model.nn_params, hybrid_features(sample), model.net);

  // TL partials plus the network's sensitivity to its first three features.
  const Eigen::RowVectorXd d_feat =
      nn_jacobian_inputs(model.nn_params, hybrid_features(sample), model.net);
  jac.d_mvec = tl_jacobian_vector_mag(sample, model.tl) +
               Eigen::Vector3d(d_feat(0), d_feat(1), d_feat(2));
  return jac;
}

namespace {

constexpr char kPayloadMagic[] = "magnav-calib-state v1";

std::string payload_body(const WarmPayload& p) {
  std::ostringstream ss;
  ss << "n_nn " << p.nn_params.size() << "\n";
  ss << "tl";
  for (int i = 0; i < 18; ++i) ss << " " << format_double(p.tl_beta(i));
  ss << "\ncb " << format_double(p.bias_cb) << "\nnn";
  for (int i = 0; i < p.nn_params.size(); ++i)
    ss << " " << format_double(p.nn_params(i));
  ss << "\n";
  for (int r = 0; r < p.cov.rows(); ++r) {
    ss << "cov";
    for (int c = 0; c < p.cov.cols(); ++c) ss << " " << format_double(p.cov(r, c));
    ss << "\n";
  }
  return ss.str();
}

}  // namespace

void save_warm_payload(const WarmPayload& payload, const std::string& path) {
  const int n = 19 + static_cast<int>(payload.nn_params.size());
  if (payload.cov.rows() != n || payload.cov.cols() != n)
    throw std::invalid_argument("save_warm_payload: covariance dimension mismatch");
  const std::string body = payload_body(payload);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_warm_payload: cannot open " + path);
  out << kPayloadMagic << "\n" << body;
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", crc32(body));
  out << "checksum " << crc << "\n";
}

WarmPayload load_warm_payload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_warm_payload: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kPayloadMagic)
    throw std::runtime_error("load_warm_payload: bad magic in " + path);

  std::string body;
  std::string checksum_line;
  while (std::getline(in, line)) {
    if (line.rfind("checksum ", 0) == 0) {
      checksum_line = line;
      break;
    }
    body += line + "\n";
  }
  if (checksum_line.empty())
    throw std::runtime_error("load_warm_payload: missing checksum");
  char expect[16];
  std::snprintf(expect, sizeof expect, "%08x", crc32(body));
  if (checksum_line != std::string("checksum ") + expect)
    throw std::runtime_error("load_warm_payload: checksum mismatch");

  WarmPayload p;
  std::istringstream ss(body);
  std::string tag;
  int n_nn = 0;
  ss >> tag >> n_nn;
  if (tag != "n_nn" || n_nn < 0)
    throw std::runtime_error("load_warm_payload: malformed n_nn");
  ss >> tag;
  for (int i = 0; i < 18; ++i) ss >> p.tl_beta(i);
  ss >> tag >> p.bias_cb;
  ss >> tag;
  p.nn_params.resize(n_nn);
  for (int i = 0; i < n_nn; ++i) ss >> p.nn_params(i);
  const int n = 19 + n_nn;
  p.cov.resize(n, n);
  for (int r = 0; r < n; ++r) {
    ss >> tag;
    for (int c = 0; c < n; ++c) ss >> p.cov(r, c);
  }
  if (!ss) throw std::runtime_error("load_warm_payload: truncated payload");
  return p;
}

WarmPayload HybridRunResult::as_warm_payload() const {
  WarmPayload p;
  p.tl_beta = tl_estimate;
  p.bias_cb = bias_estimate;
  p.nn_params = nn_estimate;
  p.cov = final_cov;
  return p;
}

TLCoefficients default_tl_truth() {
  TLCoefficients tl;
  tl.beta << 20.0, -15.0, 30.0,                                     // permanent
      0.02, 0.01, -0.015, 0.025, 0.005, 0.03,                       // induced
      0.001, -0.0005, 0.0008, 0.0012, -0.0007, 0.0003, -0.0009, 0.0004,
      0.0011;                                                       // eddy
  return tl;
}

namespace {

// Z-Y-X Euler rotation body->NED.
Eigen::Matrix3d rot_nb(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// Bounded nonlinear residual, deliberately outside the TL model class.
double residual_truth(const MagSample& s, double amplitude) {
  const Eigen::Vector3d bh = s.m_vec.normalized();
  return amplitude * std::tanh(2.0 * bh.x() * bh.y()) * std::cos(3.0 * bh.z());
}

}  // namespace

HybridRunResult run_hybrid_calibration(const HybridSimConfig& config,
                                       const StartMode& start) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  NetworkConfig net = NetworkConfig::plain(4, config.n_hidden, /*output bias*/ false,
                                           config.nn_alpha);
  const double b_e = config.external_field_ned.norm();
  net.input_offsets << 0.0, 0.0, 0.0, b_e;
  net.input_scales << b_e, b_e, b_e, b_e;
  const int np = net.param_count();
  const int n = 19 + np;

  GaussianState state;
  state.mean = Eigen::VectorXd::Zero(n);
  state.cov = Eigen::MatrixXd::Zero(n, n);
  if (start.kind == StartKind::Cold) {
    state.mean.tail(np) =
        glorot_init(net, config.nn_gain, mix_seed(config.seed, 0x636f6c64ULL));
    state.cov.topLeftCorner(18, 18) = config.p0_tl * Eigen::MatrixXd::Identity(18, 18);
    state.cov(18, 18) = config.p0_cb;
    state.cov.bottomRightCorner(np, np) =
        config.p0_nn * Eigen::MatrixXd::Identity(np, np);
  } else {
    if (!start.warm) throw std::invalid_argument("warm start requires a payload");
    const auto& w = *start.warm;
    if (w.nn_params.size() != np || w.cov.rows() != n)
      throw std::invalid_argument("warm payload dimensions do not match the model");
    state.mean.head(18) = w.tl_beta;
    state.mean(18) = w.bias_cb;
    state.mean.tail(np) = w.nn_params;
    state.cov = w.cov;
  }

  NoiseConfig noise;
  noise.process_noise = Eigen::MatrixXd::Zero(n, n);
  noise.process_noise.topLeftCorner(18, 18) =
      config.q_tl * Eigen::MatrixXd::Identity(18, 18);
  noise.process_noise(18, 18) = config.q_cb;
  noise.process_noise.bottomRightCorner(np, np) =
      config.q_nn * Eigen::MatrixXd::Identity(np, np);
  noise.measurement_variance = config.r;
  noise.dt = config.dt;

  Rng rng(mix_seed(config.seed, 0x68796272ULL));
  std::normal_distribution<double> normal(0.0, 1.0);

  HybridRunResult res;
  const int steps = static_cast<int>(config.duration / config.dt);
  res.t.reserve(steps);

  Eigen::Vector3d m_prev = Eigen::Vector3d::Zero();
  std::vector<double> window;  // trailing 60 s of squared model error
  const std::size_t window_len = static_cast<std::size_t>(60.0 / config.dt);
  double sum_sq_tail = 0.0;
  int tail_count = 0;

  for (int k = 0; k < steps; ++k) {
    const double t = k * config.dt;
    const double roll = config.att_amplitude.x() *
                        std::sin(kTwoPi * t / config.att_period.x());
    const double pitch = config.att_amplitude.y() *
                         std::sin(kTwoPi * t / config.att_period.y());
    const double yaw = config.att_amplitude.z() *
                       std::sin(kTwoPi * t / config.att_period.z());

    MagSample sample;
    sample.m_vec = rot_nb(roll, pitch, yaw).transpose() * config.external_field_ned;
    sample.m_scalar = b_e;
    sample.dt = config.dt;
    sample.m_dot = k == 0 ? Eigen::Vector3d::Zero()
                          : finite_diff_mdot(sample.m_vec, m_prev, config.dt);
    m_prev = sample.m_vec;
    if (k == 0) continue;  // no valid m_dot yet

    const double platform_truth = build_a_row(sample).dot(config.tl_truth.beta) +
                                  residual_truth(sample, config.residual_amplitude);
    const double z = b_e + platform_truth + config.sigma_meas * normal(rng);

    state = predict_static(state, noise);

    HybridModel model;
    model.tl.beta = state.mean.head(18);
    model.net = net;
    model.nn_params = state.mean.tail(np);
    model.bias_cb = state.mean(18);

    const double platform_pred = hybrid_predict(sample, model);
    const HybridJacobian j = hybrid_jacobian(sample, model);
    Eigen::RowVectorXd H(n);
    H.head(18) = j.d_tl;
    H(18) = j.d_bias;
    H.tail(np) = j.d_nn;

    auto [posterior, rec] =
        update_scalar(state, z, b_e + platform_pred, H, noise);
    state = std::move(posterior);

    // Recorded outputs use the posterior estimate.
    model.tl.beta = state.mean.head(18);
    model.nn_params = state.mean.tail(np);
    model.bias_cb = state.mean(18);
    const double tl_out = tl_predict(sample, model.tl);
    const double nn_out = nn_forward(model.nn_params, hybrid_features(sample), net);
    const double model_out = tl_out + nn_out + model.bias_cb;
    const double err = platform_truth - model_out;

    res.t.push_back(t);
    res.platform_truth.push_back(platform_truth);
    res.platform_model.push_back(model_out);
    res.tl_output.push_back(tl_out);
    res.nn_output.push_back(nn_out);
    res.bias_output.push_back(model.bias_cb);
    res.nn_output_max_abs = std::max(res.nn_output_max_abs, std::abs(nn_out));

    window.push_back(err * err);
    if (window.size() > window_len) window.erase(window.begin());
    double acc = 0.0;
    for (double e2 : window) acc += e2;
    res.calib_rmse_window.push_back(std::sqrt(acc / window.size()));

    if (k >= 3 * steps / 4) {
      sum_sq_tail += err * err;
      ++tail_count;
    }
    if (std::abs(err) > 100.0 * std::max(1.0, config.residual_amplitude))
      res.diverged = true;
  }

  res.final_rmse = tail_count ? std::sqrt(sum_sq_tail / tail_count) : 0.0;
  res.tl_estimate = state.mean.head(18);
  res.bias_estimate = state.mean(18);
  res.nn_estimate = state.mean.tail(np);
  res.final_cov = state.cov;
  return res;
}

}  // namespace magnav
