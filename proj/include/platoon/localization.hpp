#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "platoon/core_types.hpp"

namespace platoon {

/// Encoder speed and IMU yaw rate for one motion update.
struct ImuInput {
  double v = 0.0;
  double yaw_rate = 0.0;
};

/// Emulated GPS fix. `heading_valid` is false when the fix could not derive a
/// heading (vehicle did not move between frames).
struct GpsFix {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  bool heading_valid = true;
  SimTime timestamp;
};

class SingularInnovationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EkfState {
  Eigen::Vector3d x_hat = Eigen::Vector3d::Zero();  // [x, y, theta]
  Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d W = Eigen::Matrix3d::Zero();  // process noise
  Eigen::Matrix3d V = Eigen::Matrix3d::Zero();  // measurement noise
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();

  Pose2D pose() const { return {x_hat(0), x_hat(1), x_hat(2)}; }
};

/// Filter seeded at `initial` with the robot-testbed noise settings:
/// W = diag(0.01, 0.01, 0.001), V = diag(0, 0, 0.01), P0 = 0.01 I.
inline EkfState make_ekf(const Pose2D& initial) {
  EkfState s;
  s.x_hat << initial.x, initial.y, normalize_angle(initial.theta);
  s.P = Eigen::Vector3d(0.01, 0.01, 0.01).asDiagonal();
  s.W = Eigen::Vector3d(0.01, 0.01, 0.001).asDiagonal();
  s.V = Eigen::Vector3d(0.0, 0.0, 0.01).asDiagonal();
  return s;
}

/// Unicycle motion update with the heading advanced before the position.
inline Eigen::Vector3d motion_model(const Eigen::Vector3d& x, const ImuInput& u,
                                    double dt) {
  const double heading = x(2) + dt * u.yaw_rate;
  return {x(0) + dt * u.v * std::cos(heading),
          x(1) + dt * u.v * std::sin(heading), heading};
}

/// Jacobian of motion_model with respect to the state.
inline Eigen::Matrix3d jacobian(const Eigen::Vector3d& x, const ImuInput& u,
                                double dt) {
  const double heading = x(2) + dt * u.yaw_rate;
  Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
  A(0, 2) = -u.v * dt * std::sin(heading);
  A(1, 2) = u.v * dt * std::cos(heading);
  return A;
}

inline EkfState predict(EkfState s, const ImuInput& u, double dt) {
  const Eigen::Matrix3d A = jacobian(s.x_hat, u, dt);
  s.x_hat = motion_model(s.x_hat, u, dt);
  s.x_hat(2) = normalize_angle(s.x_hat(2));
  s.P = A * s.P * A.transpose() + s.W;
  return s;
}

namespace detail {

template <int Rows>
EkfState apply_correction(EkfState s,
                          const Eigen::Matrix<double, Rows, 3>& H,
                          const Eigen::Matrix<double, Rows, Rows>& V,
                          const Eigen::Matrix<double, Rows, 1>& innovation) {
  const Eigen::Matrix<double, Rows, Rows> S = H * s.P * H.transpose() + V;
  const double det = S.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) {
    throw SingularInnovationError("EKF innovation covariance is singular");
  }
  const Eigen::Matrix<double, 3, Rows> K = s.P * H.transpose() * S.inverse();
  s.x_hat += K * innovation;
  s.x_hat(2) = normalize_angle(s.x_hat(2));
  s.P = (Eigen::Matrix3d::Identity() - K * H) * s.P;
  s.P = 0.5 * (s.P + s.P.transpose()).eval();
  return s;
}

}  // namespace detail

/// Measurement update with a GPS fix. Call after predict() for the same
/// step. The heading innovation is wrapped to (-pi, pi]; a fix without a
/// valid heading corrects position only.
inline EkfState correct(const EkfState& s, const GpsFix& z) {
  if (z.heading_valid) {
    Eigen::Vector3d innovation =
        Eigen::Vector3d(z.x, z.y, z.theta) - s.H * s.x_hat;
    innovation(2) = normalize_angle(innovation(2));
    return detail::apply_correction<3>(s, s.H, s.V, innovation);
  }
  const Eigen::Matrix<double, 2, 3> H = s.H.topRows<2>();
  const Eigen::Matrix2d V = s.V.topLeftCorner<2, 2>();
  const Eigen::Vector2d innovation =
      Eigen::Vector2d(z.x, z.y) - H * s.x_hat;
  return detail::apply_correction<2>(s, H, V, innovation);
}

}  // namespace platoon
