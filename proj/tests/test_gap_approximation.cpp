#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "platoon/gap_approximation.hpp"

using namespace platoon;

namespace {

LaneMap straight_map(double length = 10.0, double spacing = 0.15) {
  std::vector<Vec2> pts;
  const int n = static_cast<int>(std::lround(length / spacing));
  for (int k = 0; k <= n; ++k) pts.push_back({k * spacing, 0.0});
  return LaneMap(pts, false);
}

LaneMap circle_map(double radius, double spacing) {
  const int n = static_cast<int>(std::lround(2.0 * kPi * radius / spacing));
  std::vector<Vec2> pts;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * kPi * k / n;
    pts.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return LaneMap(pts, true);
}

double quadrature_arc(double a, double b, double x1, double x2) {
  auto f = [&](double x) {
    const double u = 2.0 * a * x + b;
    return std::sqrt(1.0 + u * u);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, std::min(x1, x2), std::max(x1, x2), 15, 1e-14);
}

// Least squares through the normal equations in long double with partial
// pivoting; independent of the QR path under test.
struct LongFit {
  long double a, b, c, rms;
};

LongFit normal_equation_fit(const std::vector<Vec2>& pts) {
  long double m[3][4] = {};
  for (const Vec2& p : pts) {
    const long double x = p.x, y = p.y;
    const long double row[3] = {x * x, x, 1.0L};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
      m[i][3] += row[i] * y;
    }
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    }
    for (int j = 0; j < 4; ++j) std::swap(m[col][j], m[piv][j]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const long double f = m[r][col] / m[col][col];
      for (int j = col; j < 4; ++j) m[r][j] -= f * m[col][j];
    }
  }
  LongFit out{m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2], 0.0L};
  long double ss = 0.0L;
  for (const Vec2& p : pts) {
    const long double x = p.x;
    const long double r = p.y - ((out.a * x + out.b) * x + out.c);
    ss += r * r;
  }
  out.rms = std::sqrt(ss / pts.size());
  return out;
}

}  // namespace

// --- bounding box ---------------------------------------------------------

TEST(BoundingBox, Example) {
  const Box b = bounding_box({0, 0}, {1, 0}, 0.5);
  EXPECT_EQ(b, (Box{-0.5, -0.5, 1.5, 0.5}));
}

TEST(BoundingBox, CoincidentPointsGiveASquare) {
  const Box b = bounding_box({2, 3}, {2, 3}, 0.25);
  EXPECT_EQ(b, (Box{1.75, 2.75, 2.25, 3.25}));
}

TEST(BoundingBox, SymmetricAndContainsBoth) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{d(rng), d(rng)}, q{d(rng), d(rng)};
    const Box b1 = bounding_box(p, q, 0.3);
    EXPECT_EQ(b1, bounding_box(q, p, 0.3));
    EXPECT_TRUE(b1.contains(p));
    EXPECT_TRUE(b1.contains(q));
  }
  EXPECT_THROW(bounding_box({0, 0}, {1, 1}, 0.0), InvalidArgument);
}

// --- quadratic fit --------------------------------------------------------

TEST(FitQuadratic, ExactParabola) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 5; ++i) {
    const double x = 0.1 * i;
    pts.push_back({x, 2 * x * x + 3 * x + 1});
  }
  const QuadraticFit f = fit_quadratic(pts, FitFrame::identity());
  EXPECT_NEAR(f.a, 2.0, 1e-9);
  EXPECT_NEAR(f.b, 3.0, 1e-9);
  EXPECT_NEAR(f.c, 1.0, 1e-9);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
  EXPECT_FALSE(f.degenerate());
}

TEST(FitQuadratic, LineGivesZeroCurvature) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 5; ++i) pts.push_back({0.1 * i, 0.05 * i});
  const QuadraticFit f = fit_quadratic(pts, FitFrame::identity());
  EXPECT_NEAR(f.a, 0.0, 1e-9);
  EXPECT_NEAR(f.b, 0.5, 1e-9);
  EXPECT_NEAR(f.c, 0.0, 1e-9);
}

TEST(FitQuadratic, QuarterCircleMatchesNormalEquations) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 12; ++i) {
    const double t = 0.5 * kPi * i / 12.0 * 0.98;  // stay off the vertical
    pts.push_back({std::cos(t), std::sin(t)});
  }
  const QuadraticFit f = fit_quadratic(pts, FitFrame::identity());
  const LongFit ref = normal_equation_fit(pts);
  EXPECT_NEAR(f.a, static_cast<double>(ref.a), 1e-9);
  EXPECT_NEAR(f.b, static_cast<double>(ref.b), 1e-9);
  EXPECT_NEAR(f.c, static_cast<double>(ref.c), 1e-9);
  EXPECT_NEAR(f.residual_rms, static_cast<double>(ref.rms), 1e-12);
}

TEST(FitQuadratic, VerticalRoadIsFineInTheChordFrame) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 6; ++i) pts.push_back({1.0, 0.15 * i});
  EXPECT_THROW(fit_quadratic(pts, FitFrame::identity()), GapApproximationError);
  const QuadraticFit f = fit_quadratic(pts);
  EXPECT_NEAR(f.a, 0.0, 1e-12);
  EXPECT_NEAR(f.b, 0.0, 1e-12);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
}

TEST(FitQuadratic, Failures) {
  const std::vector<Vec2> two{{0, 0}, {1, 0}};
  try {
    fit_quadratic(two);
    FAIL();
  } catch (const GapApproximationError& e) {
    EXPECT_EQ(e.kind(), GapFailure::fit_failure);
  }
  // Doubles back on itself in x.
  const std::vector<Vec2> fold{{0, 0}, {1, 0.1}, {0.5, 0.3}, {1.5, 0.4}};
  EXPECT_THROW(fit_quadratic(fold, FitFrame::identity()), GapApproximationError);
}

TEST(FitFrame, RoundTrip) {
  const std::vector<Vec2> pts{{1, 1}, {2, 3}};
  const FitFrame fr = FitFrame::chord(pts);
  const Vec2 p{-0.3, 4.2};
  const Vec2 back = fr.to_world(fr.to_local(p));
  EXPECT_NEAR(back.x, p.x, 1e-12);
  EXPECT_NEAR(back.y, p.y, 1e-12);
  const Vec2 end = fr.to_local(pts.back());
  EXPECT_NEAR(end.y, 0.0, 1e-12);
  EXPECT_GT(end.x, 0.0);
}

// --- projection -----------------------------------------------------------

TEST(Projection, PointOnCurveIsFixed) {
  std::vector<Vec2> slice;
  for (int i = -4; i <= 4; ++i) {
    const double x = 0.1 * i;
    slice.push_back({x, 0.7 * x * x - 0.2 * x + 0.1});
  }
  const QuadraticFit f = fit_quadratic(slice, FitFrame::identity());
  for (double x : {-0.33, -0.1, 0.0, 0.07, 0.29}) {
    const Vec2 p{x, f.eval(x)};
    const Projection pr = project_onto_curve(f, p, slice);
    EXPECT_NEAR(pr.world.x, p.x, 1e-9);
    EXPECT_NEAR(pr.world.y, p.y, 1e-9);
    EXPECT_FALSE(pr.fallback);
  }
}

TEST(Projection, StraightLineFootOfPerpendicular) {
  std::vector<Vec2> slice;
  for (int i = 0; i <= 8; ++i) slice.push_back({0.15 * i, 0.5 * 0.15 * i});
  const QuadraticFit f = fit_quadratic(slice);
  const Vec2 dir{2.0 / std::sqrt(5.0), 1.0 / std::sqrt(5.0)};
  const Vec2 normal{-dir.y, dir.x};
  const Vec2 foot = 0.6 * dir;
  const Projection pr = project_onto_curve(f, foot + 0.04 * normal, slice);
  EXPECT_NEAR(pr.world.x, foot.x, 1e-9);
  EXPECT_NEAR(pr.world.y, foot.y, 1e-9);
}

TEST(Projection, ParabolaMatchesDenseLineSearch) {
  std::vector<Vec2> slice;
  for (int i = -10; i <= 10; ++i) {
    const double x = 0.15 * i;
    slice.push_back({x, x * x});
  }
  const QuadraticFit f = fit_quadratic(slice, FitFrame::identity());
  const Vec2 p{0.5, 1.0};
  const Projection pr = project_onto_curve(f, p, slice);

  // Oracle: the same line, searched on a 1e-6 grid of its parameter for the
  // sign change of y - x^2 nearest t = 0.
  const auto [ia, ib] = LaneMap::two_closest_in(slice, p);
  const Vec2 seg = slice[ib] - slice[ia];
  const Vec2 n{-seg.y / seg.norm(), seg.x / seg.norm()};
  auto resid = [&](double t) {
    const Vec2 q = p + t * n;
    return q.y - q.x * q.x;
  };
  double best_t = NAN;
  const double step = 1e-6;
  for (long i = 0; i < 3'000'000 && std::isnan(best_t); ++i) {
    for (double t : {i * step, -i * step}) {
      if (resid(t) * resid(t + (t >= 0 ? step : -step)) <= 0.0) {
        best_t = t;
        break;
      }
    }
  }
  ASSERT_FALSE(std::isnan(best_t));
  const Vec2 expect = p + best_t * n;
  EXPECT_NEAR(pr.world.x, expect.x, 2e-6);
  EXPECT_NEAR(pr.world.y, expect.y, 2e-6);
  EXPECT_FALSE(pr.fallback);
}

TEST(Projection, MissFallsBackToNearestCurvePoint) {
  std::vector<Vec2> pts;
  for (int i = -10; i <= 10; ++i) {
    const double x = 0.1 * i;
    pts.push_back({x, 5.0 * x * x});
  }
  const QuadraticFit f = fit_quadratic(pts, FitFrame::identity());
  // A vertical reference segment makes the projection line horizontal; at
  // y = -3 it passes under the vertex and never meets the curve.
  const std::vector<Vec2> segment{{0.0, 0.0}, {0.0, 0.15}};
  const Projection pr = project_onto_curve(f, {0.95, -3.0}, segment);
  EXPECT_TRUE(pr.fallback);
  const double x = pr.x_local;
  const double g = (x - 0.95) + (f.eval(x) + 3.0) * f.slope(x);
  EXPECT_NEAR(g, 0.0, 1e-9);
  EXPECT_NEAR(pr.world.y, f.eval(pr.world.x), 1e-12);
}

TEST(Projection, EquidistantRootsTakeTheLowerOne) {
  // Line y = 1 meets y = x^2 at x = -1 and x = +1, both 1 from (0, 1).
  std::vector<Vec2> pts;
  for (int i = -10; i <= 10; ++i) {
    const double x = 0.15 * i;
    pts.push_back({x, x * x});
  }
  const QuadraticFit f = fit_quadratic(pts, FitFrame::identity());
  const std::vector<Vec2> segment{{0.0, 0.0}, {0.0, 0.15}};
  const Projection pr = project_onto_curve(f, {0.0, 1.0}, segment);
  EXPECT_TRUE(pr.tie);
  EXPECT_FALSE(pr.fallback);
  // The line parameter runs along the left normal (-1, 0), so the lower
  // parameter is the intersection at x = +1.
  EXPECT_NEAR(pr.world.x, 1.0, 1e-9);
  EXPECT_NEAR(pr.world.y, 1.0, 1e-9);
}

// --- arc length -----------------------------------------------------------

TEST(ArcLength, Examples) {
  EXPECT_DOUBLE_EQ(arc_length(0.0, 0.0, 0.0, 2.0), 2.0);
  EXPECT_NEAR(arc_length(0.0, 1.0, 0.0, 1.0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(arc_length(1.0, 0.0, 0.0, 1.0), 1.478943, 5e-7);
  EXPECT_NEAR(arc_length(1.0, 0.0, 0.0, 1.0), quadrature_arc(1.0, 0.0, 0.0, 1.0),
              1e-12);
}

TEST(ArcLength, OrderIrrelevantAndAtLeastChordX) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int i = 0; i < 2000; ++i) {
    const double a = d(rng), b = d(rng), x1 = d(rng), x2 = d(rng);
    EXPECT_EQ(arc_length(a, b, x1, x2), arc_length(a, b, x2, x1));
    EXPECT_GE(arc_length(a, b, x1, x2), std::abs(x2 - x1) * (1 - 1e-15));
  }
}

TEST(ArcLength, Additivity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int i = 0; i < 2000; ++i) {
    const double a = d(rng), b = d(rng);
    double xs[3] = {d(rng), d(rng), d(rng)};
    std::sort(xs, xs + 3);
    const double whole = arc_length(a, b, xs[0], xs[2]);
    const double parts = arc_length(a, b, xs[0], xs[1]) + arc_length(a, b, xs[1], xs[2]);
    EXPECT_NEAR(whole, parts, 1e-9 * std::max(1.0, whole));
  }
}

TEST(ArcLength, MatchesQuadrature) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coef(-5, 5);
  std::uniform_real_distribution<double> pos(-1, 1);
  std::uniform_real_distribution<double> tiny(-1e-6, 1e-6);
  for (int i = 0; i < 1000; ++i) {
    const double a = i % 10 == 0 ? 0.0 : (i % 10 == 1 ? tiny(rng) : coef(rng));
    const double b = coef(rng);
    const double x1 = pos(rng);
    const double x2 = i % 7 == 0 ? x1 + 1e-4 * pos(rng) : pos(rng);
    const double got = arc_length(a, b, x1, x2);
    const double ref = quadrature_arc(a, b, x1, x2);
    if (ref == 0.0) {
      EXPECT_EQ(got, 0.0);
    } else {
      EXPECT_LT(std::abs(got - ref) / ref, 1e-9) << a << ' ' << b << ' ' << x1 << ' ' << x2;
    }
  }
}

// --- full pipeline ----------------------------------------------------------

TEST(ApproximateGap, StraightOnCenterline) {
  const LaneMap m = straight_map();
  const GapEstimate e = approximate_gap({3.0, 0.0}, {3.6, 0.0}, m, {});
  EXPECT_NEAR(e.distance, 0.6, 1e-6);
}

TEST(ApproximateGap, LateralOffsetIsRejected) {
  const LaneMap m = straight_map();
  const double base = approximate_gap({3.0, 0.0}, {3.6, 0.0}, m, {}).distance;
  EXPECT_NEAR(approximate_gap({3.0, 0.03}, {3.6, 0.0}, m, {}).distance, base, 1e-6);
  for (double dy : {-0.05, -0.02, 0.01, 0.05}) {
    EXPECT_LT(std::abs(approximate_gap({3.0, dy}, {3.6, 0.0}, m, {}).distance - base), 1e-3);
    EXPECT_LT(std::abs(approximate_gap({3.0, 0.0}, {3.6, dy}, m, {}).distance - base), 1e-3);
  }
}

TEST(ApproximateGap, LongitudinalSensitivity) {
  const LaneMap m = straight_map();
  const double base = approximate_gap({3.0, 0.0}, {3.6, 0.0}, m, {}).distance;
  for (double delta : {-0.1, -0.03, 0.02, 0.1}) {
    const double moved = approximate_gap({3.0, 0.0}, {3.6 + delta, 0.0}, m, {}).distance;
    EXPECT_NEAR(moved - base, delta, 0.02 * std::abs(delta));
    const double moved_f = approximate_gap({3.0 - delta, 0.0}, {3.6, 0.0}, m, {}).distance;
    EXPECT_NEAR(moved_f - base, delta, 0.02 * std::abs(delta));
  }
}

TEST(ApproximateGap, CircularArc) {
  const double R = 2.0;
  const LaneMap m = circle_map(R, 0.15);
  for (double deg : {5.0, 10.0, 17.2, 30.0}) {
    const double phi = deg * kPi / 180.0;
    const double a0 = 0.3;
    const Vec2 f{R * std::cos(a0), R * std::sin(a0)};
    const Vec2 l{R * std::cos(a0 + phi), R * std::sin(a0 + phi)};
    const double d = approximate_gap(f, l, m, {}).distance;
    EXPECT_NEAR(d, R * phi, 0.01 * R * phi) << deg;
  }
}

TEST(ApproximateGap, Symmetric) {
  const LaneMap m = make_oval(4.0, 2.0, 0.15);
  for (double s = 0.0; s < m.length(); s += 0.23) {
    const Vec2 p = m.pose_at(s).position();
    const Vec2 q = m.pose_at(s + 0.6).position();
    EXPECT_NEAR(approximate_gap(p, q, m, {}).distance,
                approximate_gap(q, p, m, {}).distance, 1e-12);
  }
}

TEST(ApproximateGap, MonotoneInTrueSeparation) {
  const LaneMap m = make_oval(4.0, 2.0, 0.15);
  for (double s_f : {0.5, 3.0, 5.5, 8.0}) {
    const Vec2 f = m.pose_at(s_f).position();
    double prev = -1.0;
    for (double ds = 0.2; ds <= 1.2; ds += 0.01) {
      const double d = approximate_gap(f, m.pose_at(s_f + ds).position(), m, {}).distance;
      ASSERT_GT(d, prev) << "s_f " << s_f << " ds " << ds;
      prev = d;
    }
  }
}

TEST(ApproximateGap, StalePoseIsRejected) {
  const LaneMap m = straight_map();
  try {
    approximate_gap({3.0, 0.0}, {3.6, 0.0}, m, {}, 0.6);
    FAIL();
  } catch (const GapApproximationError& e) {
    EXPECT_EQ(e.kind(), GapFailure::stale_pose);
  }
}

TEST(ApproximateGap, AmbiguousBoxIsReported) {
  // Narrow oval: the two straights are 0.6 m apart, so a margin that spans
  // the gap catches both.
  const LaneMap m = make_oval(4.0, 0.3, 0.1);
  GapConfig cfg;
  cfg.margin = 0.7;
  try {
    approximate_gap({-0.5, -0.3}, {0.1, -0.3}, m, cfg);
    FAIL();
  } catch (const GapApproximationError& e) {
    EXPECT_EQ(e.kind(), GapFailure::ambiguous_segment);
  }
}

TEST(ApproximateGap, MarginGrowsWhenTooFewPoints) {
  const LaneMap m = straight_map(10.0, 0.5);
  GapConfig cfg;
  cfg.margin = 0.1;
  const GapEstimate e = approximate_gap({3.1, 0.0}, {3.7, 0.0}, m, cfg);
  EXPECT_GT(e.margin_used, cfg.margin);
  EXPECT_NEAR(e.distance, 0.6, 1e-9);
}
