#include "magnav/trajectory.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "magnav/rng.hpp"

namespace magnav {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Slow multiplicative speed modulation, phase seeded per trial.
double speed_at(const TrajectoryPlan& plan, double t, double phase) {
  return plan.nominal_speed *
         (1.0 + plan.speed_jitter * std::sin(kTwoPi * t / plan.speed_period + phase));
}

// Converts a position series into samples whose velocity is the exact
// interval chord, so position is the cumulative integral of velocity at dt
// resolution with no corner residue. Speed is the along-path speed.
std::vector<TrajectorySample> from_positions(const std::vector<Eigen::Vector2d>& pos,
                                             const std::vector<double>& path_speed,
                                             double dt, int n_steps) {
  std::vector<TrajectorySample> out;
  out.reserve(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) {
    TrajectorySample s;
    s.position = pos[k];
    s.velocity = (pos[k + 1] - pos[k]) / dt;
    s.heading = std::atan2(s.velocity.y(), s.velocity.x());
    s.speed = path_speed[k];
    out.push_back(s);
  }
  return out;
}

// Follows a closed list of waypoints at the modulated speed.
std::vector<TrajectorySample> follow_waypoints(const TrajectoryPlan& plan,
                                               const std::vector<Eigen::Vector2d>& wps,
                                               double phase) {
  const int n_steps = static_cast<int>(std::round(plan.duration / plan.dt));
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> path_speed;
  positions.reserve(n_steps + 2);
  path_speed.reserve(n_steps + 2);

  Eigen::Vector2d pos = wps.front();
  std::size_t target = 1;
  Eigen::Vector2d dir = (wps[target] - pos).normalized();

  for (int k = 0; k <= n_steps + 1; ++k) {
    const double t = k * plan.dt;
    const double v = speed_at(plan, t, phase);
    positions.push_back(pos);
    path_speed.push_back(v);

    // Advance, hopping waypoints as legs are consumed.
    double remaining = v * plan.dt;
    while (remaining > 0.0) {
      const double to_target = (wps[target % wps.size()] - pos).norm();
      if (to_target > remaining) {
        pos += remaining * dir;
        remaining = 0.0;
      } else {
        pos = wps[target % wps.size()];
        remaining -= to_target;
        ++target;
        dir = (wps[target % wps.size()] - pos).normalized();
      }
    }
  }
  return from_positions(positions, path_speed, plan.dt, n_steps);
}

// Advances a parametric curve p(theta) at the modulated ground speed.
template <typename Curve>
std::vector<TrajectorySample> follow_curve(const TrajectoryPlan& plan, Curve curve,
                                           double phase) {
  const int n_steps = static_cast<int>(std::round(plan.duration / plan.dt));
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> path_speed;
  positions.reserve(n_steps + 2);
  path_speed.reserve(n_steps + 2);

  double theta = 0.0;
  for (int k = 0; k <= n_steps + 1; ++k) {
    const double t = k * plan.dt;
    const double v = speed_at(plan, t, phase);
    positions.push_back(curve(theta));
    path_speed.push_back(v);

    // Sub-step theta so arc length matches v*dt on curved sections.
    const double h = 1e-6;
    const double remaining = v * plan.dt;
    const int substeps = 8;
    for (int i = 0; i < substeps; ++i) {
      const Eigen::Vector2d d =
          (curve(theta + h) - curve(theta - h)) / (2.0 * h);
      theta += (remaining / substeps) / std::max(d.norm(), 1e-12);
    }
  }
  return from_positions(positions, path_speed, plan.dt, n_steps);
}

}  // namespace

std::vector<TrajectorySample> generate_trajectory(const TrajectoryPlan& plan,
                                                  std::uint64_t seed) {
  if (!(plan.dt > 0.0) || !(plan.nominal_speed > 0.0) || !(plan.duration > 0.0))
    throw std::invalid_argument("TrajectoryPlan: dt, speed, duration must be > 0");

  Rng rng(mix_seed(seed, 0x7472616aULL));
  std::uniform_real_distribution<double> uphase(0.0, kTwoPi);
  const double phase = uphase(rng);

  switch (plan.kind) {
    case TrajectoryKind::Lawnmower: {
      std::vector<Eigen::Vector2d> wps;
      Eigen::Vector2d p = plan.start;
      wps.push_back(p);
      // Enough legs to cover the whole run even at max speed.
      const double path_needed = plan.duration * plan.nominal_speed *
                                 (1.0 + plan.speed_jitter) * 1.1;
      int legs = static_cast<int>(path_needed / plan.leg_length) + 2;
      int dir = 1;
      for (int i = 0; i < legs; ++i) {
        p.x() += dir * plan.leg_length;
        wps.push_back(p);
        p.y() += plan.leg_spacing;
        wps.push_back(p);
        dir = -dir;
      }
      return follow_waypoints(plan, wps, phase);
    }
    case TrajectoryKind::FigureEight: {
      const Eigen::Vector2d c = plan.start;
      const double a = plan.radius;
      auto curve = [c, a](double th) {
        return Eigen::Vector2d(c.x() + a * std::sin(th),
                               c.y() + a * std::sin(th) * std::cos(th));
      };
      return follow_curve(plan, curve, phase);
    }
    case TrajectoryKind::Spiral: {
      const Eigen::Vector2d c = plan.start;
      const double r0 = 0.15 * plan.radius;
      const double k = plan.spiral_pitch / kTwoPi;
      auto curve = [c, r0, k](double th) {
        const double r = r0 + k * th;
        return Eigen::Vector2d(c.x() + r * std::cos(th), c.y() + r * std::sin(th));
      };
      return follow_curve(plan, curve, phase);
    }
    case TrajectoryKind::Irregular: {
      std::uniform_real_distribution<double> upos(plan.margin,
                                                  plan.extent - plan.margin);
      std::vector<Eigen::Vector2d> wps;
      wps.emplace_back(plan.start);
      for (int i = 0; i < plan.n_waypoints; ++i)
        wps.emplace_back(upos(rng), upos(rng));
      return follow_waypoints(plan, wps, phase);
    }
  }
  throw std::logic_error("generate_trajectory: unknown kind");
}

}  // namespace magnav
