#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "panodense/raster.hpp"
#include "panodense/sphere_geometry.hpp"

namespace panodense {

/// A posed equirectangular keyframe together with the sparse landmarks it
/// observes (world coordinates).
struct Keyframe {
  std::int64_t id = 0;
  std::shared_ptr<const ColorImage> image;
  RigidPose pose;
  std::vector<Vec3> sparse_points;
  /// Landmark identities parallel to sparse_points. When empty, landmarks are
  /// matched across keyframes by exact coordinates.
  std::vector<std::int64_t> sparse_ids;

  const Vec3& center() const { return pose.translation; }
};

}  // namespace panodense
