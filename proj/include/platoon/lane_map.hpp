#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "platoon/core_types.hpp"

namespace platoon {

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The box caught more than one stretch of road (e.g. both legs of a hairpin).
class AmbiguousSegmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Box {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(Vec2 p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Consecutive run of lane-centre points in path order. `first` is the map
/// index of points.front(); indices wrap on closed maps.
struct LaneSlice {
  std::size_t first = 0;
  std::vector<Vec2> points;
};

/// Ordered lane-centre polyline. Immutable after construction.
class LaneMap {
 public:
  static constexpr double kMinSpacing = 0.01;
  static constexpr double kMaxSpacing = 1.0;

  LaneMap(std::vector<Vec2> points, bool closed)
      : points_(std::move(points)), closed_(closed) {
    if (points_.size() < 3) {
      throw MapError("lane map needs at least 3 points");
    }
    cumulative_.resize(points_.size());
    cumulative_[0] = 0.0;
    for (std::size_t k = 1; k < points_.size(); ++k) {
      segments_.push_back(check_spacing(k - 1, k));
      cumulative_[k] = cumulative_[k - 1] + segments_.back();
    }
    total_ = cumulative_.back();
    if (closed_) {
      segments_.push_back(check_spacing(points_.size() - 1, 0));
      total_ += segments_.back();
    }
  }

  const std::vector<Vec2>& points() const { return points_; }
  bool closed() const { return closed_; }
  std::size_t size() const { return points_.size(); }
  const Vec2& operator[](std::size_t k) const { return points_[k]; }
  const std::vector<double>& cumulative_arc() const { return cumulative_; }
  /// Path length, including the closing segment on closed maps.
  double length() const { return total_; }
  std::size_t segment_count() const {
    return closed_ ? points_.size() : points_.size() - 1;
  }
  std::size_t next(std::size_t k) const {
    return k + 1 < points_.size() ? k + 1 : (closed_ ? 0 : k);
  }

  /// Indices of the two nearest points, nearest first; ties go to the lower
  /// index.
  std::pair<std::size_t, std::size_t> two_closest_points(Vec2 p) const {
    return two_closest_in(points_, p);
  }

  /// Same query restricted to an ordered point list.
  static std::pair<std::size_t, std::size_t> two_closest_in(
      const std::vector<Vec2>& pts, Vec2 p) {
    std::size_t best = 0;
    std::size_t second = 1;
    double d_best = (pts[0] - p).squared_norm();
    double d_second = (pts[1] - p).squared_norm();
    if (d_second < d_best) {
      std::swap(best, second);
      std::swap(d_best, d_second);
    }
    for (std::size_t k = 2; k < pts.size(); ++k) {
      const double d = (pts[k] - p).squared_norm();
      if (d < d_best) {
        second = best;
        d_second = d_best;
        best = k;
        d_best = d;
      } else if (d < d_second) {
        second = k;
        d_second = d;
      }
    }
    return {best, second};
  }

  /// All points inside `box`, in path order. Throws AmbiguousSegmentError
  /// unless they form a single contiguous run along the path.
  LaneSlice points_in_box(const Box& box) const {
    if (box.min_x > box.max_x || box.min_y > box.max_y) {
      throw InvalidArgument("points_in_box: malformed box");
    }
    const std::size_t n = points_.size();
    std::vector<bool> inside(n);
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
      inside[k] = box.contains(points_[k]);
      count += inside[k] ? 1 : 0;
    }
    LaneSlice slice;
    if (count == 0) {
      return slice;
    }
    if (count == n) {
      slice.first = 0;
      slice.points = points_;
      return slice;
    }
    // A run starts where a point is inside and its predecessor is not.
    std::size_t runs = 0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool prev_inside =
          k > 0 ? inside[k - 1] : (closed_ ? inside[n - 1] : false);
      if (inside[k] && !prev_inside) {
        ++runs;
        start = k;
      }
    }
    if (runs != 1) {
      throw AmbiguousSegmentError("bounding box covers " +
                                  std::to_string(runs) +
                                  " disjoint stretches of the lane");
    }
    slice.first = start;
    slice.points.reserve(count);
    for (std::size_t k = start, i = 0; i < count; ++i, k = (k + 1) % n) {
      slice.points.push_back(points_[k]);
    }
    return slice;
  }

  /// Point at arc position `s` along the polyline, with the segment heading.
  /// `s` wraps on closed maps and is clamped on open ones.
  Pose2D pose_at(double s) const {
    const auto [k, t] = locate(s);
    const Vec2 a = points_[k];
    const Vec2 b = points_[next(k)];
    const Vec2 p = a + t * (b - a);
    return {p.x, p.y, std::atan2(b.y - a.y, b.x - a.x)};
  }

  /// Segment index and fraction for arc position `s`.
  std::pair<std::size_t, double> locate(double s) const {
    if (closed_) {
      s = std::fmod(s, total_);
      if (s < 0.0) s += total_;
    } else {
      s = std::clamp(s, 0.0, total_);
    }
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t k = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    if (!closed_ && k + 1 >= points_.size()) {
      k = points_.size() - 2;
    }
    const double len = segment_length(k);
    return {k, std::clamp((s - cumulative_[k]) / len, 0.0, 1.0)};
  }

  /// Euclidean length of segment k (from point k to next(k)).
  double segment_length(std::size_t k) const { return segments_[k]; }

  /// Orthogonal projection of `p` onto the polyline, as an arc position.
  /// With `hint_arc` set, only segments within `window` of it are searched.
  double project_arc(Vec2 p, double hint_arc = -1.0,
                     double window = std::numeric_limits<double>::infinity())
      const {
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    const std::size_t segs = segment_count();
    for (std::size_t k = 0; k < segs; ++k) {
      if (hint_arc >= 0.0 && std::isfinite(window) &&
          arc_separation(cumulative_[k], hint_arc) >
              window + segment_length(k)) {
        continue;
      }
      const Vec2 a = points_[k];
      const Vec2 ab = points_[next(k)] - a;
      const double t =
          std::clamp((p - a).dot(ab) / ab.squared_norm(), 0.0, 1.0);
      const double d = (a + t * ab - p).squared_norm();
      if (d < best_d) {
        best_d = d;
        best_s = cumulative_[k] + t * segment_length(k);
      }
    }
    if (!std::isfinite(best_d)) {
      throw MapError("no lane segment within search window");
    }
    return best_s;
  }

  /// Unsigned distance between two arc positions (shortest way round on
  /// closed maps).
  double arc_separation(double s1, double s2) const {
    double d = std::abs(s1 - s2);
    if (closed_) {
      d = std::fmod(d, total_);
      d = std::min(d, total_ - d);
    }
    return d;
  }

  friend bool operator==(const LaneMap& a, const LaneMap& b) {
    return a.closed_ == b.closed_ && a.points_ == b.points_;
  }

 private:
  double check_spacing(std::size_t i, std::size_t j) const {
    const double d = distance(points_[i], points_[j]);
    if (d == 0.0) {
      throw MapError("duplicate consecutive lane points at index " +
                     std::to_string(j));
    }
    if (d < kMinSpacing || d > kMaxSpacing) {
      throw MapError("lane point spacing " + std::to_string(d) +
                     " m out of range at index " + std::to_string(j));
    }
    return d;
  }

  std::vector<Vec2> points_;
  bool closed_;
  std::vector<double> cumulative_;
  std::vector<double> segments_;
  double total_ = 0.0;
};

/// Parses the `lanemap v1` text format: a header line
/// `lanemap v1 closed|open`, then one `x y` pair per line. Blank lines and
/// lines starting with '#' are ignored.
inline LaneMap load_map(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_header = false;
  bool closed = false;
  std::vector<Vec2> pts;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    if (!have_header) {
      std::string magic, version, kind, extra;
      fields >> magic >> version >> kind;
      if (magic != "lanemap" || version != "v1" ||
          (kind != "closed" && kind != "open") || (fields >> extra)) {
        throw MapError("line " + std::to_string(line_no) +
                       ": expected header 'lanemap v1 closed|open'");
      }
      closed = kind == "closed";
      have_header = true;
      continue;
    }
    Vec2 p;
    std::string extra;
    if (!(fields >> p.x >> p.y) || (fields >> extra) || !std::isfinite(p.x) ||
        !std::isfinite(p.y)) {
      throw MapError("line " + std::to_string(line_no) +
                     ": malformed point record");
    }
    pts.push_back(p);
  }
  if (!have_header) {
    throw MapError("empty lane map");
  }
  return LaneMap(std::move(pts), closed);
}

inline std::string save_map(const LaneMap& map) {
  std::ostringstream out;
  out << "lanemap v1 " << (map.closed() ? "closed" : "open") << '\n';
  out << std::setprecision(17);
  for (const Vec2& p : map.points()) {
    out << p.x << ' ' << p.y << '\n';
  }
  return out.str();
}

/// Oval track: two straights of `straight` metres joined by semicircles of
/// `radius`, traversed counter-clockwise starting at the beginning of the
/// bottom straight. Points are spaced evenly per piece at roughly `spacing`.
inline LaneMap make_oval(double straight, double radius, double spacing) {
  const int n_straight =
      std::max(1, static_cast<int>(std::lround(straight / spacing)));
  const int n_curve =
      std::max(2, static_cast<int>(std::lround(kPi * radius / spacing)));
  std::vector<Vec2> pts;
  const double half = straight / 2.0;
  auto add_straight = [&](double y, double x_from, double x_to) {
    for (int i = 0; i < n_straight; ++i) {
      pts.push_back({x_from + (x_to - x_from) * i / n_straight, y});
    }
  };
  auto add_curve = [&](double cx, double start_angle) {
    for (int i = 0; i < n_curve; ++i) {
      const double a = start_angle + kPi * i / n_curve;
      pts.push_back({cx + radius * std::cos(a), radius * std::sin(a)});
    }
  };
  add_straight(-radius, -half, half);
  add_curve(half, -kPi / 2.0);
  add_straight(radius, half, -half);
  add_curve(-half, kPi / 2.0);
  return LaneMap(std::move(pts), true);
}

}  // namespace platoon
