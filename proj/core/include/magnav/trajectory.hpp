#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace magnav {

enum class TrajectoryKind { Lawnmower, FigureEight, Spiral, Irregular };

/// Geometry + timing of a 2-D survey path.
struct TrajectoryPlan {
  TrajectoryKind kind = TrajectoryKind::Lawnmower;
  double duration = 3600.0;     // s
  double dt = 1.0;              // s
  double nominal_speed = 20.0;  // m/s
  double speed_jitter = 0.1;    // fractional slow modulation of the speed
  double speed_period = 60.0;   // s, period of the modulation

  Eigen::Vector2d start{250.0, 200.0};

  // Lawnmower geometry.
  double leg_length = 1200.0;   // m
  double leg_spacing = 10.0;   // m

  // Figure-eight / spiral geometry.
  double radius = 600.0;        // m, half-width of the lobes / outer radius
  double spiral_pitch = 40.0;   // m of radius growth per turn

  // Irregular: seeded waypoints inside [margin, extent - margin]^2.
  int n_waypoints = 10;
  double extent = 2000.0;
  double margin = 200.0;
};

struct TrajectorySample {
  Eigen::Vector2d position;  // m
  Eigen::Vector2d velocity;  // m/s
  double heading;            // rad, atan2(vy, vx)
  double speed;              // m/s
};

/// Kinematic ground truth at dt resolution. Position is the cumulative
/// integral of velocity; heading follows the track direction.
std::vector<TrajectorySample> generate_trajectory(const TrajectoryPlan& plan,
                                                  std::uint64_t seed);

}  // namespace magnav
