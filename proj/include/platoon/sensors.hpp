#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "platoon/core_types.hpp"
#include "platoon/localization.hpp"

namespace platoon {

using Rng = std::mt19937_64;

inline double gaussian(Rng& rng, double stddev) {
  if (stddev <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, stddev)(rng);
}

/// Scalar range reading. `distance` is empty whenever the target is not
/// detected.
struct RangeReading {
  std::optional<double> distance;
  bool valid() const { return distance.has_value(); }
};

struct RangeSensorConfig {
  double fov_half_angle = 15.0 * kPi / 180.0;  // [rad]
  double max_range = 5.0;                      // [m]
  double noise_std = 0.002;                    // [m]
};

/// Forward range sensor. `target_point` is the nearest point of the target
/// body (its rear bumper), both in ground truth. Detection is purely
/// geometric: within range and inside the +/- fov cone about the ego heading.
inline RangeReading range_sensor(const Pose2D& ego_true, Vec2 target_point,
                                 const RangeSensorConfig& cfg, Rng& rng) {
  const Vec2 d = target_point - ego_true.position();
  const double range = d.norm();
  const double bearing =
      normalize_angle(std::atan2(d.y, d.x) - ego_true.theta);
  if (range > cfg.max_range || std::abs(bearing) > cfg.fov_half_angle) {
    return {};
  }
  return {range + gaussian(rng, cfg.noise_std)};
}

/// Displacement below which an emulated GPS fix carries no heading.
inline constexpr double kMinHeadingDisplacement = 1e-3;

/// Overhead-camera style fix: noisy position; heading is the direction from
/// the previous fix to this one.
inline GpsFix emulated_gps(const Pose2D& true_pose,
                           const std::optional<Vec2>& previous_fix,
                           double noise_std_pos, Rng& rng, SimTime now = {}) {
  GpsFix fix;
  fix.x = true_pose.x + gaussian(rng, noise_std_pos);
  fix.y = true_pose.y + gaussian(rng, noise_std_pos);
  fix.timestamp = now;
  fix.heading_valid = false;
  if (previous_fix) {
    const Vec2 d = Vec2{fix.x, fix.y} - *previous_fix;
    if (d.norm() >= kMinHeadingDisplacement) {
      fix.theta = std::atan2(d.y, d.x);
      fix.heading_valid = true;
    }
  }
  return fix;
}

struct ImuNoise {
  double yaw_rate_std = 0.01;  // [rad/s]
  double speed_std = 0.005;    // [m/s]
};

inline ImuInput read_imu(double true_speed, double true_yaw_rate,
                         const ImuNoise& noise, Rng& rng) {
  return {true_speed + gaussian(rng, noise.speed_std),
          true_yaw_rate + gaussian(rng, noise.yaw_rate_std)};
}

}  // namespace platoon
