#pragma once

#include <cmath>
#include <stdexcept>

#include "platoon/core_types.hpp"
#include "platoon/lane_map.hpp"

namespace platoon {

class PathLostError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PursuitConfig {
  double lookahead = 0.4;       // arc distance ahead of the projection [m]
  double understeer_bias = 0.0; // commanded curvature is scaled by 1 + bias
  double search_window = 1.0;   // around the arc hint [m]

  void validate() const {
    if (!(lookahead > 0.0)) throw InvalidArgument("lookahead must be > 0");
    if (!(understeer_bias >= 0.0 && understeer_bias <= 1.0)) {
      throw InvalidArgument("understeer_bias must lie in [0, 1]");
    }
  }
};

struct PursuitResult {
  double curvature = 0.0;  // [1/m], positive turns left
  double arc = 0.0;        // projection of the pose onto the path
  Vec2 lookahead_point;
};

/// Pure pursuit on the lane polyline. The look-ahead point sits `lookahead`
/// metres of path beyond the pose's projection; the commanded curvature is
/// that of the circle tangent to the heading through both the pose and the
/// look-ahead point, 2 y / d^2 with (x, y) the point in the vehicle frame and
/// d its distance.
///
/// `hint_arc` (the previous projection) restricts the search to
/// `search_window` so the projection cannot jump across the track.
inline PursuitResult pursuit_curvature(const Pose2D& pose, const LaneMap& path,
                                       const PursuitConfig& cfg,
                                       double hint_arc = -1.0) {
  PursuitResult r;
  try {
    r.arc = hint_arc >= 0.0
                ? path.project_arc(pose.position(), hint_arc, cfg.search_window)
                : path.project_arc(pose.position());
  } catch (const MapError&) {
    throw PathLostError("pure pursuit: no path within search window");
  }
  const double target_arc = r.arc + cfg.lookahead;
  if (!path.closed() && target_arc > path.length()) {
    throw PathLostError("pure pursuit: look-ahead runs off the path end");
  }
  r.lookahead_point = path.pose_at(target_arc).position();
  const Vec2 d = r.lookahead_point - pose.position();
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  const double y_local = -s * d.x + c * d.y;
  const double dist2 = d.squared_norm();
  if (!(dist2 > 0.0)) {
    return r;
  }
  r.curvature = (1.0 + cfg.understeer_bias) * 2.0 * y_local / dist2;
  return r;
}

/// Unicycle update along a circular arc of the given curvature.
inline Pose2D kinematic_step(const Pose2D& pose, double v, double curvature,
                             double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("kinematic_step: dt must be > 0");
  const double ds = v * dt;
  const double dtheta = ds * curvature;
  Pose2D out = pose;
  if (std::abs(dtheta) < 1e-12) {
    out.x += ds * std::cos(pose.theta + 0.5 * dtheta);
    out.y += ds * std::sin(pose.theta + 0.5 * dtheta);
  } else {
    out.x += (std::sin(pose.theta + dtheta) - std::sin(pose.theta)) / curvature;
    out.y -= (std::cos(pose.theta + dtheta) - std::cos(pose.theta)) / curvature;
  }
  out.theta = normalize_angle(pose.theta + dtheta);
  return out;
}

}  // namespace platoon
