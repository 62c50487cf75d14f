#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace platoon {

inline constexpr double kPi = std::numbers::pi;

/// Thrown for malformed arguments and invalid configuration values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  if (!std::isfinite(a)) {
    throw InvalidArgument("normalize_angle: non-finite angle");
  }
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Planar position plus heading (CCW from +x).
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

inline Pose2D make_pose(double x, double y, double theta) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw InvalidArgument("Pose2D: non-finite position");
  }
  return {x, y, normalize_angle(theta)};
}

/// Discrete simulation clock. Every module rate is an integer number of base
/// steps, so conversions between clocks never drift.
struct SimTime {
  std::int64_t tick = 0;
  double dt_base = 0.01;

  double seconds() const { return static_cast<double>(tick) * dt_base; }
  friend bool operator==(const SimTime&, const SimTime&) = default;
};

inline constexpr double kBaseStep = 0.01;   // IMU / EKF period
inline constexpr int kCommsPeriodTicks = 5;  // 20 Hz
inline constexpr int kGpsPeriodTicks = 50;   // 2 Hz

/// Number of base steps in `period`; throws unless it is an exact multiple.
inline int ticks_for(double period, double dt_base) {
  if (!(dt_base > 0.0)) {
    throw InvalidArgument("ticks_for: dt_base must be positive");
  }
  const double n = period / dt_base;
  const double r = std::round(n);
  if (r < 0.0 || std::abs(n - r) > 1e-9 * std::max(1.0, r)) {
    throw InvalidArgument("period " + std::to_string(period) +
                          " s is not a multiple of the base step");
  }
  return static_cast<int>(r);
}

inline bool is_rate_tick(std::int64_t tick, int period_ticks) {
  return period_ticks > 0 && tick % period_ticks == 0;
}

struct VehicleParams {
  double tau = 0.0661;       // first-order lag time constant [s]
  double tau_d = 0.04;       // actuation delay [s]
  double body_length = 0.3;  // [m]
  double h = 0.8;            // time gap [s]
  double l0 = 0.2;           // standstill distance [m]

  void validate(double dt_base = kBaseStep) const {
    if (!(tau > 0.0)) throw InvalidArgument("tau must be > 0");
    if (!(tau_d >= 0.0)) throw InvalidArgument("tau_d must be >= 0");
    if (!(body_length > 0.0)) throw InvalidArgument("body_length must be > 0");
    if (!(h > 0.0)) throw InvalidArgument("h must be > 0");
    if (!(l0 >= 0.0)) throw InvalidArgument("l0 must be >= 0");
    ticks_for(tau_d, dt_base);
  }
};

}  // namespace platoon
