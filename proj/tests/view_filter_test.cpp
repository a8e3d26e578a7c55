#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "panodense/view_filter.hpp"

using namespace panodense;

namespace {

Keyframe keyframe_at(const Vec3& center, std::vector<Vec3> points) {
  Keyframe k;
  k.pose.translation = center;
  k.sparse_points = std::move(points);
  for (size_t i = 0; i < k.sparse_points.size(); ++i) k.sparse_ids.push_back(static_cast<std::int64_t>(i));
  return k;
}

// Apex angle of an isosceles triangle with half-base b and height d.
double isosceles_angle_deg(double b, double d) { return 2.0 * std::atan(b / d) * 180.0 / std::numbers::pi; }

}  // namespace

TEST(ViewFilter, ZeroBaselineRejected) {
  const std::vector<Vec3> pts{{0, 0, 3}, {1, 2, 4}, {-2, 0, 5}};
  const auto r = view_filter_accept(keyframe_at({1, 1, 1}, pts), keyframe_at({1, 1, 1}, pts), ViewFilterConfig{});
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.passing_points, 0);
  for (const auto& p : pts) EXPECT_EQ(triangulation_angle_deg({1, 1, 1}, {1, 1, 1}, p), 0.0);
}

TEST(ViewFilter, AnalyticAngleAtTwoMeters) {
  const Vec3 a(-1, 0, 0), b(1, 0, 0), p(0, 0, 2);
  EXPECT_NEAR(triangulation_angle_deg(a, b, p), isosceles_angle_deg(1.0, 2.0), 1e-9);
  EXPECT_NEAR(triangulation_angle_deg(a, b, p), 53.130102354, 1e-6);
  const auto r = view_filter_accept(keyframe_at(a, {p}), keyframe_at(b, {p}), ViewFilterConfig{});
  EXPECT_TRUE(r.accepted);
  EXPECT_DOUBLE_EQ(r.fraction, 1.0);
}

TEST(ViewFilter, AnalyticAngleAtOneMeterIsRight) {
  // Point at unit distance from a baseline of 2: the angle is 90 degrees,
  // outside [6, 60].
  const Vec3 a(-1, 0, 0), b(1, 0, 0), p(0, 0, 1);
  EXPECT_NEAR(triangulation_angle_deg(a, b, p), 90.0, 1e-9);
  EXPECT_FALSE(view_filter_accept(keyframe_at(a, {p}), keyframe_at(b, {p}), ViewFilterConfig{}).accepted);
}

TEST(ViewFilter, TwentyPercentBoundaryAccepted) {
  // 20 points see the baseline under about 11 degrees, 80 under about 0.6.
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.emplace_back(0.01 * i, 0, 10.0);
  for (int i = 0; i < 80; ++i) pts.emplace_back(0.01 * i, 0, 200.0);
  const Vec3 a(-1, 0, 0), b(1, 0, 0);
  const auto r = view_filter_accept(keyframe_at(a, pts), keyframe_at(b, pts), ViewFilterConfig{});
  EXPECT_EQ(r.common_points, 100);
  EXPECT_EQ(r.passing_points, 20);
  EXPECT_TRUE(r.accepted);

  pts.erase(pts.begin());
  pts.emplace_back(0, 0, 300.0);
  const auto below = view_filter_accept(keyframe_at(a, pts), keyframe_at(b, pts), ViewFilterConfig{});
  EXPECT_EQ(below.passing_points, 19);
  EXPECT_FALSE(below.accepted);
}

TEST(ViewFilter, ClosedAngleInterval) {
  // A closer point subtends a larger angle.
  const Vec3 a(-1, 0, 0), b(1, 0, 0);
  ViewFilterConfig config;
  config.accept_fraction = 1.0;
  auto accepted = [&](double d) {
    const Vec3 p(0, 0, d);
    return view_filter_accept(keyframe_at(a, {p}), keyframe_at(b, {p}), config).accepted;
  };
  const double d_at_max = 1.0 / std::tan(30.0 * std::numbers::pi / 180.0);
  const double d_at_min = 1.0 / std::tan(3.0 * std::numbers::pi / 180.0);
  EXPECT_TRUE(accepted(d_at_max * (1.0 + 1e-9)));
  EXPECT_FALSE(accepted(d_at_max * (1.0 - 1e-6)));
  EXPECT_TRUE(accepted(d_at_min * (1.0 - 1e-9)));
  EXPECT_FALSE(accepted(d_at_min * (1.0 + 1e-6)));
}

TEST(ViewFilter, NoCommonLandmarksRejected) {
  Keyframe a = keyframe_at({0, 0, 0}, {{0, 0, 3}});
  Keyframe b = keyframe_at({1, 0, 0}, {{0, 0, 3}});
  b.sparse_ids = {99};
  const auto r = view_filter_accept(a, b, ViewFilterConfig{});
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.reason, "no-overlap");
  EXPECT_EQ(r.common_points, 0);
}

TEST(ViewFilter, CommonSetByIdentity) {
  Keyframe a = keyframe_at({0, 0, 0}, {{0, 0, 3}, {0, 1, 3}, {1, 0, 3}});
  Keyframe b = keyframe_at({0.5, 0, 0}, {{0, 1, 3}, {5, 5, 5}});
  b.sparse_ids = {1, 42};
  EXPECT_EQ(common_landmarks(a, b).size(), 1u);
  EXPECT_EQ(common_landmarks(a, b)[0], Vec3(0, 1, 3));
}

TEST(ViewFilter, AngleIsSymmetric) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), p(u(rng), u(rng), u(rng));
    EXPECT_EQ(triangulation_angle_deg(a, b, p), triangulation_angle_deg(b, a, p));
  }
}

TEST(ViewFilterConfig, Validation) {
  ViewFilterConfig c;
  EXPECT_NO_THROW(c.validate());
  c.theta_min_deg = 70;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViewFilterConfig{};
  c.accept_fraction = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.accept_fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}
