#pragma once

// Completeness and accuracy metrics against synthetic ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "panodense/fusion.hpp"
#include "panodense/patchmatch.hpp"
#include "panodense/sphere_geometry.hpp"

namespace panodense {

inline constexpr int kCompletenessWidth = 720;
inline constexpr int kCompletenessHeight = 360;

/// Nearest-point depth of every cloud point projected into a panorama at
/// `pose`.
inline DepthPanorama project_cloud(const FusedCloud& cloud, const RigidPose& pose, const EquirectCamera& camera) {
  DepthPanorama out(camera);
  const Mat3 rot_t = pose.rotation.transpose();
  for (const auto& p : cloud.points) {
    const Vec3 local = rot_t * (p.position - pose.translation);
    const double d = local.norm();
    if (!(d > 1e-9)) continue;
    const Vec2 px = ray_to_pixel(camera, local);
    const int x = wrap_column(static_cast<int>(std::lround(px.x())), camera.width());
    const int y = std::min(static_cast<int>(std::lround(px.y())), camera.height() - 1);
    if (!out.is_valid(x, y) || d < out.depth.at(x, y)) out.set(x, y, static_cast<float>(d));
  }
  return out;
}

struct CompletenessReport {
  int width = kCompletenessWidth;
  int height = kCompletenessHeight;
  std::vector<double> per_keyframe;
  std::size_t point_count = 0;

  double mean() const {
    if (per_keyframe.empty()) return 0.0;
    double s = 0.0;
    for (double c : per_keyframe) s += c;
    return s / static_cast<double>(per_keyframe.size());
  }
};

/// Fraction of raster pixels hit by at least one cloud point, per keyframe
/// pose.
inline CompletenessReport completeness(const FusedCloud& cloud, std::span<const RigidPose> poses,
                                       const EquirectCamera& camera = {kCompletenessWidth, kCompletenessHeight}) {
  CompletenessReport report;
  report.width = camera.width();
  report.height = camera.height();
  report.point_count = cloud.size();
  for (const auto& pose : poses) {
    report.per_keyframe.push_back(project_cloud(cloud, pose, camera).valid_ratio());
  }
  return report;
}

struct AccuracyReport {
  /// False when prediction and ground truth share no valid pixel; the error
  /// fields are then meaningless.
  bool defined = false;
  std::size_t count = 0;
  double mean_abs_rel = 0.0;
  double rmse = 0.0;
  double inlier_fraction = 0.0;
};

namespace detail {

struct AccuracyAccumulator {
  std::size_t n = 0, inliers = 0;
  double abs_rel = 0.0, sq = 0.0;
  double inlier_rel;

  void add(double predicted, double truth) {
    const double rel = std::abs(predicted - truth) / truth;
    abs_rel += rel;
    sq += (predicted - truth) * (predicted - truth);
    if (rel <= inlier_rel) ++inliers;
    ++n;
  }

  AccuracyReport report() const {
    AccuracyReport r;
    r.count = n;
    r.defined = n > 0;
    if (n == 0) return r;
    r.mean_abs_rel = abs_rel / static_cast<double>(n);
    r.rmse = std::sqrt(sq / static_cast<double>(n));
    r.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(n);
    return r;
  }
};

}  // namespace detail

/// Per-pixel error statistics over pixels valid in both panoramas.
inline AccuracyReport accuracy(const DepthPanorama& predicted, const DepthPanorama& truth,
                               double inlier_rel = 0.02) {
  if (!(predicted.camera == truth.camera)) throw DomainError("accuracy needs panoramas of one resolution");
  detail::AccuracyAccumulator acc{.inlier_rel = inlier_rel};
  for (int y = 0; y < truth.height(); ++y) {
    for (int x = 0; x < truth.width(); ++x) {
      if (predicted.is_valid(x, y) && truth.is_valid(x, y) && truth.depth.at(x, y) > 0.0f) {
        acc.add(predicted.depth.at(x, y), truth.depth.at(x, y));
      }
    }
  }
  return acc.report();
}

struct GroundTruthView {
  RigidPose pose;
  const DepthPanorama* depth = nullptr;
};

/// Cloud accuracy: every point is compared, in its source keyframe, with the
/// ground-truth depth at the pixel it projects to.
inline AccuracyReport accuracy(const FusedCloud& cloud, const std::map<std::int64_t, GroundTruthView>& truth,
                               double inlier_rel = 0.02) {
  detail::AccuracyAccumulator acc{.inlier_rel = inlier_rel};
  for (const auto& p : cloud.points) {
    const auto it = truth.find(p.source_id);
    if (it == truth.end() || !it->second.depth) continue;
    const DepthPanorama& gt = *it->second.depth;
    const RigidPose& pose = it->second.pose;
    const Vec3 local = pose.rotation.transpose() * (p.position - pose.translation);
    const double d = local.norm();
    if (!(d > 1e-9)) continue;
    const Vec2 px = ray_to_pixel(gt.camera, local);
    const int x = wrap_column(static_cast<int>(std::lround(px.x())), gt.width());
    const int y = std::min(static_cast<int>(std::lround(px.y())), gt.height() - 1);
    if (gt.is_valid(x, y) && gt.depth.at(x, y) > 0.0f) acc.add(d, gt.depth.at(x, y));
  }
  return acc.report();
}

/// Nearest-neighbor resampling of a panorama onto another resolution.
inline DepthPanorama resample_nearest(const DepthPanorama& input, const EquirectCamera& camera) {
  DepthPanorama out(camera);
  for (int y = 0; y < camera.height(); ++y) {
    const int sy = std::min(input.height() - 1, static_cast<int>((y + 0.5) * input.height() / camera.height()));
    for (int x = 0; x < camera.width(); ++x) {
      const int sx = std::min(input.width() - 1, static_cast<int>((x + 0.5) * input.width() / camera.width()));
      if (input.is_valid(sx, sy)) out.set(x, y, input.depth.at(sx, sy));
    }
  }
  return out;
}

/// Number of distinct cells of a cubic voxel grid holding at least one point.
inline std::size_t voxel_occupancy(const FusedCloud& cloud, double voxel) {
  std::vector<std::array<std::int64_t, 3>> keys;
  keys.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    keys.push_back({static_cast<std::int64_t>(std::floor(p.position.x() / voxel)),
                    static_cast<std::int64_t>(std::floor(p.position.y() / voxel)),
                    static_cast<std::int64_t>(std::floor(p.position.z() / voxel))});
  }
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

}  // namespace panodense
