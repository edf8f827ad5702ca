#include "magnav/field.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "magnav/rng.hpp"

namespace magnav {

AnomalyMap2D AnomalyMap2D::gaussian_sum(std::vector<GaussianBump> bumps,
                                        double gradient_step) {
  for (const auto& b : bumps)
    if (!(b.width > 0.0))
      throw std::invalid_argument("AnomalyMap2D: bump width must be > 0");
  if (!(gradient_step > 0.0))
    throw std::invalid_argument("AnomalyMap2D: gradient_step must be > 0");
  AnomalyMap2D m;
  m.kind_ = Kind::AnalyticGaussianSum;
  m.bumps_ = std::move(bumps);
  m.gradient_step_ = gradient_step;
  return m;
}

AnomalyMap2D AnomalyMap2D::grid(Eigen::Vector2d origin, double spacing,
                                Eigen::MatrixXd values, double gradient_step) {
  if (!(spacing > 0.0)) throw std::invalid_argument("AnomalyMap2D: spacing must be > 0");
  if (values.rows() < 2 || values.cols() < 2)
    throw std::invalid_argument("AnomalyMap2D: grid needs at least 2x2 nodes");
  AnomalyMap2D m;
  m.kind_ = Kind::Grid;
  m.origin_ = origin;
  m.spacing_ = spacing;
  m.values_ = std::move(values);
  m.gradient_step_ = gradient_step;
  return m;
}

AnomalyMap2D AnomalyMap2D::random_default(std::uint64_t seed, int n_bumps,
                                          double extent) {
  Rng rng(mix_seed(seed, 0x6d6170ULL));  // distinct stream from trial noise
  // Dense enough that the gradient rarely vanishes along a survey path;
  // widths stay well above typical filter position errors so the EKF
  // linearization of the map holds.
  std::uniform_real_distribution<double> upos(0.05 * extent, 0.95 * extent);
  std::uniform_real_distribution<double> uamp(50.0, 300.0);
  std::uniform_real_distribution<double> uwidth(0.04 * extent, 0.12 * extent);
  std::uniform_int_distribution<int> usign(0, 1);

  std::vector<GaussianBump> bumps;
  bumps.reserve(n_bumps);
  for (int i = 0; i < n_bumps; ++i) {
    GaussianBump b;
    b.center = {upos(rng), upos(rng)};
    b.amplitude = (usign(rng) ? 1.0 : -1.0) * uamp(rng);
    b.width = uwidth(rng);
    bumps.push_back(b);
  }
  return gaussian_sum(std::move(bumps));
}

AnomalyMap2D AnomalyMap2D::load_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("AnomalyMap2D: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("AnomalyMap2D: empty file");

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
  };

  const auto head = split(line);
  if (head.size() != 5)
    throw std::runtime_error("AnomalyMap2D: header must be nx,ny,origin_x,origin_y,spacing");
  const int nx = std::stoi(head[0]);
  const int ny = std::stoi(head[1]);
  const Eigen::Vector2d origin(std::stod(head[2]), std::stod(head[3]));
  const double spacing = std::stod(head[4]);

  Eigen::MatrixXd values(ny, nx);
  for (int iy = 0; iy < ny; ++iy) {
    if (!std::getline(in, line))
      throw std::runtime_error("AnomalyMap2D: truncated grid data");
    const auto row = split(line);
    if (static_cast<int>(row.size()) != nx)
      throw std::runtime_error("AnomalyMap2D: bad row length in grid data");
    for (int ix = 0; ix < nx; ++ix) values(iy, ix) = std::stod(row[ix]);
  }
  return grid(origin, spacing, std::move(values));
}

double AnomalyMap2D::value(const Eigen::Vector2d& pos) const {
  if (kind_ == Kind::AnalyticGaussianSum) {
    double v = 0.0;
    for (const auto& b : bumps_) {
      const double r2 = (pos - b.center).squaredNorm();
      v += b.amplitude * std::exp(-0.5 * r2 / (b.width * b.width));
    }
    return v;
  }

  const double fx = (pos.x() - origin_.x()) / spacing_;
  const double fy = (pos.y() - origin_.y()) / spacing_;
  const int nx = static_cast<int>(values_.cols());
  const int ny = static_cast<int>(values_.rows());
  if (fx < 0.0 || fy < 0.0 || fx > nx - 1 || fy > ny - 1)
    throw OutOfDomain("AnomalyMap2D: grid query outside domain");

  int ix = std::min(static_cast<int>(fx), nx - 2);
  int iy = std::min(static_cast<int>(fy), ny - 2);
  const double tx = fx - ix;
  const double ty = fy - iy;
  return (1 - tx) * (1 - ty) * values_(iy, ix) + tx * (1 - ty) * values_(iy, ix + 1) +
         (1 - tx) * ty * values_(iy + 1, ix) + tx * ty * values_(iy + 1, ix + 1);
}

Eigen::Vector2d AnomalyMap2D::gradient(const Eigen::Vector2d& pos) const {
  const double h = gradient_step_;
  const Eigen::Vector2d ex(h, 0.0), ey(0.0, h);
  return {(value(pos + ex) - value(pos - ex)) / (2.0 * h),
          (value(pos + ey) - value(pos - ey)) / (2.0 * h)};
}

Eigen::Vector2d AnomalyMap2D::analytic_gradient(const Eigen::Vector2d& pos) const {
  if (kind_ != Kind::AnalyticGaussianSum)
    throw std::logic_error("analytic_gradient: only for Gaussian-sum maps");
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const auto& b : bumps_) {
    const Eigen::Vector2d d = pos - b.center;
    const double s2 = b.width * b.width;
    g += b.amplitude * std::exp(-0.5 * d.squaredNorm() / s2) * (-d / s2);
  }
  return g;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> AnomalyMap2D::domain() const {
  if (kind_ == Kind::Grid) {
    const Eigen::Vector2d max =
        origin_ + spacing_ * Eigen::Vector2d(values_.cols() - 1, values_.rows() - 1);
    return {origin_, max};
  }
  if (bumps_.empty()) return {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  Eigen::Vector2d lo = bumps_.front().center, hi = bumps_.front().center;
  for (const auto& b : bumps_) {
    lo = lo.cwiseMin(b.center - 3.0 * Eigen::Vector2d::Constant(b.width));
    hi = hi.cwiseMax(b.center + 3.0 * Eigen::Vector2d::Constant(b.width));
  }
  return {lo, hi};
}

InterferenceTruth InterferenceTruth::toy_default() {
  InterferenceTruth t;
  t.beta << 0.0, 0.0, 6.0, 0.0, 2.2, 1.5, 0.016;
  t.c = 100.0;
  return t;
}

double interference_truth(const InterferenceTruth& truth,
                          const Eigen::Matrix<double, 5, 1>& f) {
  if (truth.c == 0.0) throw std::invalid_argument("InterferenceTruth: c must be nonzero");
  const auto& b = truth.beta;
  const double px = f(0), py = f(1), m = f(2), psi = f(3), s = f(4);
  return b(0) * std::sin(b(1) * px) + b(2) * std::cos(b(3) * py) +
         b(4) * (m / truth.c) * (m / truth.c) + b(5) * std::cos(psi) + b(6) * s * s;
}

Eigen::Matrix<double, 1, 7> interference_jacobian_beta(
    const InterferenceTruth& truth, const Eigen::Matrix<double, 5, 1>& f) {
  const auto& b = truth.beta;
  const double px = f(0), py = f(1), m = f(2), psi = f(3), s = f(4);
  Eigen::Matrix<double, 1, 7> j;
  j(0) = std::sin(b(1) * px);
  j(1) = b(0) * px * std::cos(b(1) * px);
  j(2) = std::cos(b(3) * py);
  j(3) = -b(2) * py * std::sin(b(3) * py);
  j(4) = (m / truth.c) * (m / truth.c);
  j(5) = std::cos(psi);
  j(6) = s * s;
  return j;
}

}  // namespace magnav
