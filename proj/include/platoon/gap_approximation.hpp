#pragma once

// Inter-vehicle distance from two localized positions and the lane map:
// bounding box -> lane points in the box -> quadratic fit -> perpendicular
// projection of each position onto the fit -> arc length between the
// projections.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "platoon/core_types.hpp"
#include "platoon/lane_map.hpp"

namespace platoon {

enum class GapFailure { ambiguous_segment, fit_failure, stale_pose };

inline const char* to_string(GapFailure f) {
  switch (f) {
    case GapFailure::ambiguous_segment: return "ambiguous_segment";
    case GapFailure::fit_failure: return "fit_failure";
    case GapFailure::stale_pose: return "stale_pose";
  }
  return "unknown";
}

class GapApproximationError : public std::runtime_error {
 public:
  GapApproximationError(GapFailure kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  GapFailure kind() const { return kind_; }

 private:
  GapFailure kind_;
};

/// Rigid transform between the world frame and a fit frame.
struct FitFrame {
  Vec2 origin;
  double cos_a = 1.0;
  double sin_a = 0.0;

  static FitFrame identity() { return {}; }

  /// Origin at the chord midpoint, +x along the chord first -> last.
  static FitFrame chord(std::span<const Vec2> pts) {
    const Vec2 d = pts.back() - pts.front();
    const double len = d.norm();
    if (!(len > 0.0)) {
      throw GapApproximationError(GapFailure::fit_failure,
                                  "fit slice has coincident end points");
    }
    return {0.5 * (pts.front() + pts.back()), d.x / len, d.y / len};
  }

  Vec2 to_local(Vec2 w) const {
    const Vec2 r = w - origin;
    return {cos_a * r.x + sin_a * r.y, -sin_a * r.x + cos_a * r.y};
  }
  Vec2 to_world(Vec2 l) const {
    return origin + Vec2{cos_a * l.x - sin_a * l.y, sin_a * l.x + cos_a * l.y};
  }
  Vec2 dir_to_local(Vec2 d) const {
    return {cos_a * d.x + sin_a * d.y, -sin_a * d.x + cos_a * d.y};
  }
};

/// y = a x^2 + b x + c in `frame`.
struct QuadraticFit {
  static constexpr double kDegenerateRms = 0.05;

  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  FitFrame frame;
  std::size_t n_points = 0;
  double residual_rms = 0.0;
  double x_min = 0.0;  // fit-frame span of the fitted points
  double x_max = 0.0;

  double eval(double x) const { return (a * x + b) * x + c; }
  double slope(double x) const { return 2.0 * a * x + b; }
  bool degenerate() const { return !(residual_rms <= kDegenerateRms); }
};

/// Axis-aligned box around both positions with every position at least
/// `margin` from every side, and exactly `margin` from its nearest side.
inline Box bounding_box(Vec2 p1, Vec2 p2, double margin) {
  if (!(margin > 0.0)) {
    throw InvalidArgument("bounding_box: margin must be positive");
  }
  return {std::min(p1.x, p2.x) - margin, std::min(p1.y, p2.y) - margin,
          std::max(p1.x, p2.x) + margin, std::max(p1.y, p2.y) + margin};
}

/// Least-squares quadratic through `pts` expressed in `frame`. The points
/// must form a graph over the frame's x axis (strictly monotone x).
inline QuadraticFit fit_quadratic(std::span<const Vec2> pts,
                                  const FitFrame& frame) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (n < 3) {
    throw GapApproximationError(GapFailure::fit_failure,
                                "quadratic fit needs at least 3 points, got " +
                                    std::to_string(n));
  }
  Eigen::MatrixX3d design(n, 3);
  Eigen::VectorXd rhs(n);
  std::vector<Vec2> local(pts.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    local[i] = frame.to_local(pts[i]);
    design(i, 0) = local[i].x * local[i].x;
    design(i, 1) = local[i].x;
    design(i, 2) = 1.0;
    rhs(i) = local[i].y;
  }
  const bool increasing = local.back().x > local.front().x;
  for (std::size_t i = 1; i < local.size(); ++i) {
    if (increasing ? !(local[i].x > local[i - 1].x)
                   : !(local[i].x < local[i - 1].x)) {
      throw GapApproximationError(
          GapFailure::fit_failure,
          "lane slice is not a graph over the fit frame x axis");
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixX3d> qr(design);
  if (qr.rank() < 3) {
    throw GapApproximationError(GapFailure::fit_failure,
                                "rank-deficient quadratic fit");
  }
  const Eigen::Vector3d coef = qr.solve(rhs);

  QuadraticFit fit;
  fit.a = coef(0);
  fit.b = coef(1);
  fit.c = coef(2);
  fit.frame = frame;
  fit.n_points = pts.size();
  double ss = 0.0;
  for (const Vec2& q : local) {
    const double r = q.y - fit.eval(q.x);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  fit.x_min = std::min(local.front().x, local.back().x);
  fit.x_max = std::max(local.front().x, local.back().x);
  if (!std::isfinite(fit.a) || !std::isfinite(fit.b) || !std::isfinite(fit.c)) {
    throw GapApproximationError(GapFailure::fit_failure,
                                "non-finite fit coefficients");
  }
  return fit;
}

/// Fit in the chord frame of the slice, which keeps the fit well posed
/// wherever the road runs vertically in world coordinates.
inline QuadraticFit fit_quadratic(std::span<const Vec2> pts) {
  if (pts.size() < 3) {
    return fit_quadratic(pts, FitFrame::identity());  // throws
  }
  return fit_quadratic(pts, FitFrame::chord(pts));
}

/// Arc length of y = a x^2 + b x + c between two abscissae. Only a and b
/// matter. Uses the antiderivative of sqrt(1 + u^2), u = 2ax + b, rearranged
/// so that nearby end points do not cancel.
inline double arc_length(double a, double b, double x_from, double x_to) {
  double x1 = std::min(x_from, x_to);
  double x2 = std::max(x_from, x_to);
  const double dx = x2 - x1;
  if (dx == 0.0) return 0.0;
  if (std::abs(a) < 1e-12) {
    return dx * std::hypot(1.0, b);
  }
  const double u1 = 2.0 * a * x1 + b;
  const double u2 = 2.0 * a * x2 + b;
  const double s1 = std::hypot(1.0, u1);
  const double s2 = std::hypot(1.0, u2);
  // u2 s2 - u1 s1 = (u2 - u1) [ (s1 + s2)/2 + (u1 + u2)^2 / (2 (s1 + s2)) ]
  const double sum_u = u1 + u2;
  const double poly_part =
      0.5 * dx * (0.5 * (s1 + s2) + sum_u * sum_u / (2.0 * (s1 + s2)));
  // asinh(u2) - asinh(u1); same-sign case via the subtraction identity.
  double asinh_diff;
  if ((u1 >= 0.0) == (u2 >= 0.0) && u1 != 0.0 && u2 != 0.0) {
    const double du = 2.0 * a * dx;
    const double arg = du * sum_u / (u2 * s1 + u1 * s2);
    asinh_diff = std::asinh(arg);
  } else {
    asinh_diff = std::asinh(u2) - std::asinh(u1);
  }
  return poly_part + asinh_diff / (4.0 * a);
}

inline double arc_length(const QuadraticFit& fit, double x_from, double x_to) {
  return arc_length(fit.a, fit.b, x_from, x_to);
}

struct Projection {
  Vec2 world;        // projection point, world frame
  double x_local{};  // abscissa of the projection in the fit frame
  bool fallback = false;  // line missed the curve; nearest curve point used
  bool tie = false;       // both intersections equidistant
};

namespace detail {

inline double nearest_curve_abscissa(const QuadraticFit& fit, Vec2 p,
                                     double lo, double hi) {
  constexpr int kSamples = 400;
  double best_x = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kSamples; ++i) {
    const double x = lo + (hi - lo) * i / kSamples;
    const double dy = fit.eval(x) - p.y;
    const double d = (x - p.x) * (x - p.x) + dy * dy;
    if (d < best_d) {
      best_d = d;
      best_x = x;
    }
  }
  // Newton on g(x) = (x - px) + (f(x) - py) f'(x).
  for (int it = 0; it < 20; ++it) {
    const double f = fit.eval(best_x) - p.y;
    const double fp = fit.slope(best_x);
    const double g = (best_x - p.x) + f * fp;
    const double gp = 1.0 + fp * fp + f * 2.0 * fit.a;
    if (!(gp > 0.0)) break;
    const double step = g / gp;
    best_x -= step;
    if (std::abs(step) < 1e-14) break;
  }
  return best_x;
}

}  // namespace detail

/// Projects `p` onto the fit along the line through `p` perpendicular to the
/// segment joining the two lane points of `slice` closest to `p`. Of the two
/// possible intersections the one nearest `p` is taken.
inline Projection project_onto_curve(const QuadraticFit& fit, Vec2 p,
                                     std::span<const Vec2> slice) {
  if (slice.size() < 2) {
    throw InvalidArgument("project_onto_curve: slice needs 2 points");
  }
  const std::vector<Vec2> pts(slice.begin(), slice.end());
  const auto [i1, i2] = LaneMap::two_closest_in(pts, p);
  // Orient the segment along the lane so the normal is its left side.
  const Vec2 seg = fit.frame.dir_to_local(pts[std::max(i1, i2)] -
                                          pts[std::min(i1, i2)]);
  const double seg_len = seg.norm();
  const Vec2 n{-seg.y / seg_len, seg.x / seg_len};
  const Vec2 q = fit.frame.to_local(p);

  // a (qx + t nx)^2 + b (qx + t nx) + c - (qy + t ny) = 0
  const double A = fit.a * n.x * n.x;
  const double B = 2.0 * fit.a * q.x * n.x + fit.b * n.x - n.y;
  const double C = fit.eval(q.x) - q.y;

  Projection out;
  double t = 0.0;
  bool found = true;
  if (A == 0.0) {
    if (B == 0.0) {
      found = false;
    } else {
      t = -C / B;
    }
  } else {
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) {
      found = false;
    } else {
      const double root = std::sqrt(disc);
      const double qq = -0.5 * (B + std::copysign(root, B));
      if (qq == 0.0) {
        t = 0.0;  // C == 0: p already on the curve
      } else {
        const double t1 = qq / A;
        const double t2 = C / qq;
        const double gap = std::abs(std::abs(t1) - std::abs(t2));
        if (gap <= 1e-12 * std::max(std::abs(t1), std::abs(t2)) && t1 != t2) {
          t = std::min(t1, t2);
          out.tie = true;
        } else {
          t = std::abs(t1) < std::abs(t2) ? t1 : t2;
        }
      }
    }
  }
  double x_star;
  if (found) {
    x_star = q.x + t * n.x;
  } else {
    const double pad = std::max(1.0, fit.x_max - fit.x_min);
    x_star = detail::nearest_curve_abscissa(fit, q, fit.x_min - pad,
                                            fit.x_max + pad);
    out.fallback = true;
  }
  out.x_local = x_star;
  out.world = fit.frame.to_world({x_star, fit.eval(x_star)});
  return out;
}

struct GapConfig {
  double margin = 0.5;           // initial bounding-box margin [m]
  std::size_t min_fit_points = 5;
  double margin_growth = 1.5;
  int max_margin_growths = 3;
  double max_staleness = 0.5;    // [s]
};

struct GapEstimate {
  double distance = 0.0;  // arc length between the projections [m]
  Vec2 proj_leader;
  Vec2 proj_follower;
  QuadraticFit fit;
  double staleness = 0.0;  // age of the leader pose [s]
  double margin_used = 0.0;
  bool projection_fallback = false;
  bool projection_tie = false;
};

/// Distance along the lane between the follower and leader positions.
/// `leader_staleness` is the age of the leader position; it is reported,
/// not compensated.
inline GapEstimate approximate_gap(Vec2 follower, Vec2 leader,
                                   const LaneMap& map, const GapConfig& cfg,
                                   double leader_staleness = 0.0) {
  if (leader_staleness > cfg.max_staleness) {
    throw GapApproximationError(
        GapFailure::stale_pose,
        "leader pose is " + std::to_string(leader_staleness) + " s old");
  }
  double margin = cfg.margin;
  LaneSlice slice;
  for (int attempt = 0;; ++attempt) {
    try {
      slice = map.points_in_box(bounding_box(follower, leader, margin));
    } catch (const AmbiguousSegmentError& e) {
      throw GapApproximationError(GapFailure::ambiguous_segment, e.what());
    }
    if (slice.points.size() >= cfg.min_fit_points ||
        attempt >= cfg.max_margin_growths) {
      break;
    }
    margin *= cfg.margin_growth;
  }
  if (slice.points.size() < 3) {
    throw GapApproximationError(
        GapFailure::fit_failure,
        "only " + std::to_string(slice.points.size()) +
            " lane points near the vehicles");
  }

  GapEstimate est;
  est.fit = fit_quadratic(slice.points);
  est.margin_used = margin;
  est.staleness = leader_staleness;
  const Projection pf = project_onto_curve(est.fit, follower, slice.points);
  const Projection pl = project_onto_curve(est.fit, leader, slice.points);
  est.proj_follower = pf.world;
  est.proj_leader = pl.world;
  est.projection_fallback = pf.fallback || pl.fallback;
  est.projection_tie = pf.tie || pl.tie;
  est.distance = arc_length(est.fit, pl.x_local, pf.x_local);
  return est;
}

}  // namespace platoon
