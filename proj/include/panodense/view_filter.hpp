#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "panodense/errors.hpp"
#include "panodense/keyframe.hpp"

namespace panodense {

struct ViewFilterConfig {
  double theta_min_deg = 6.0;
  double theta_max_deg = 60.0;
  double accept_fraction = 0.20;

  void validate() const {
    if (!(theta_min_deg > 0.0 && theta_min_deg < theta_max_deg && theta_max_deg < 180.0)) {
      throw ConfigError("view_filter.theta_min_deg and view_filter.theta_max_deg must satisfy 0 < theta_min_deg (" +
                        std::to_string(theta_min_deg) + ") < theta_max_deg (" + std::to_string(theta_max_deg) +
                        ") < 180");
    }
    if (!(accept_fraction > 0.0 && accept_fraction <= 1.0)) {
      throw ConfigError("view_filter.accept_fraction must lie in (0, 1]");
    }
  }
};

struct ViewFilterResult {
  bool accepted = false;
  /// Fraction of common landmarks whose triangulation angle is in range.
  double fraction = 0.0;
  int common_points = 0;
  int passing_points = 0;
  /// "accepted", "no-overlap" or "insufficient-angle".
  std::string reason;
};

/// Angle in degrees at `point` subtended by two camera centers.
inline double triangulation_angle_deg(const Vec3& center_a, const Vec3& center_b, const Vec3& point) {
  const Vec3 a = center_a - point;
  const Vec3 b = center_b - point;
  if (!(a.norm() > 0.0) || !(b.norm() > 0.0)) return 0.0;
  // Same angle as acos(a.b / |a||b|), without its loss of precision near 0.
  return rad_to_deg(std::atan2(a.cross(b).norm(), a.dot(b)));
}

/// Landmarks observed by both keyframes, as world points.
inline std::vector<Vec3> common_landmarks(const Keyframe& a, const Keyframe& b) {
  std::vector<Vec3> out;
  const bool by_id = !a.sparse_ids.empty() && a.sparse_ids.size() == a.sparse_points.size() &&
                     !b.sparse_ids.empty() && b.sparse_ids.size() == b.sparse_points.size();
  if (by_id) {
    std::map<std::int64_t, size_t> index;
    for (size_t i = 0; i < b.sparse_ids.size(); ++i) index.emplace(b.sparse_ids[i], i);
    for (size_t i = 0; i < a.sparse_ids.size(); ++i) {
      if (index.count(a.sparse_ids[i])) out.push_back(a.sparse_points[i]);
    }
    return out;
  }
  auto key = [](const Vec3& p) { return std::array<double, 3>{p.x(), p.y(), p.z()}; };
  std::map<std::array<double, 3>, int> seen;
  for (const auto& p : b.sparse_points) seen[key(p)] = 1;
  for (const auto& p : a.sparse_points) {
    if (seen.count(key(p))) out.push_back(p);
  }
  return out;
}

/// Decides whether `candidate` has enough stereo baseline against the newest
/// buffered keyframe: at least accept_fraction of the common landmarks must
/// see the two camera centers under an angle within [theta_min, theta_max].
inline ViewFilterResult view_filter_accept(const Keyframe& candidate, const Keyframe& latest,
                                           const ViewFilterConfig& config) {
  ViewFilterResult result;
  const auto common = common_landmarks(candidate, latest);
  result.common_points = static_cast<int>(common.size());
  if (common.empty()) {
    result.reason = "no-overlap";
    return result;
  }
  for (const auto& p : common) {
    const double theta = triangulation_angle_deg(candidate.center(), latest.center(), p);
    if (theta >= config.theta_min_deg && theta <= config.theta_max_deg) ++result.passing_points;
  }
  result.fraction = static_cast<double>(result.passing_points) / result.common_points;
  // The boundary counts as a pass; the epsilon absorbs rounding of fraction * count.
  result.accepted = result.passing_points >= config.accept_fraction * result.common_points - 1e-9;
  result.reason = result.accepted ? "accepted" : "insufficient-angle";
  return result;
}

}  // namespace panodense
