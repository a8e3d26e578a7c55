#pragma once

// Shared fixtures for the test suites and the acceptance runner.

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "panodense/keyframe.hpp"
#include "panodense/patchmatch.hpp"
#include "panodense/synth.hpp"

namespace panodense::testing {

inline RigidPose pose_at(const Vec3& t, double yaw = 0.0) {
  RigidPose p;
  p.rotation = rotation_about_y(yaw);
  p.translation = t;
  return p;
}

/// Renders a scene at three poses and wraps the result as a stereo group with
/// the middle pose as reference.
struct RenderedGroup {
  StereoGroup group;
  RenderResult reference;
  std::array<RenderResult, 2> neighbors;
};

template <RayCastScene Scene>
RenderedGroup render_group(const Scene& scene, const TextureSpec& texture, const EquirectCamera& camera,
                         const RigidPose& reference, const RigidPose& previous, const RigidPose& next,
                         int supersample = 2) {
  RenderedGroup out{{}, render_scene(scene, texture, camera, reference, supersample),
                  {render_scene(scene, texture, camera, previous, supersample),
                   render_scene(scene, texture, camera, next, supersample)}};
  auto gray = [](const RenderResult& r) { return std::make_shared<const GrayImage>(to_gray(r.image)); };
  out.group = StereoGroup{camera,
                          {gray(out.reference), reference},
                          {StereoView{gray(out.neighbors[0]), previous}, StereoView{gray(out.neighbors[1]), next}}};
  return out;
}

inline RenderedGroup room_group(const EquirectCamera& camera, double baseline = 0.2) {
  SyntheticScene scene = make_scene(SyntheticScene::Kind::box_room, 3);
  return render_group(scene, scene.texture, camera, pose_at({0, 0, 0}), pose_at({-baseline, 0, 0}),
                      pose_at({baseline, 0, 0}));
}

/// Interior of a sphere of radius `outer`, with the half x > 0 hidden behind a
/// second spherical shell of radius `inner`: two depth levels seen from the
/// origin.
struct TwoLevelScene {
  double inner = 2.0;
  double outer = 4.0;

  static std::optional<double> exit_distance(const Vec3& o, const Vec3& d, double r) {
    const double b = o.dot(d);
    const double disc = b * b - (o.squaredNorm() - r * r);
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    for (double t : {-b - s, -b + s}) {
      if (t > 1e-9) return t;
    }
    return std::nullopt;
  }

  std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& direction) const {
    const Vec3 d = direction.normalized();
    if (const auto t = exit_distance(origin, d, inner)) {
      const Vec3 p = origin + *t * d;
      if (p.x() > 0.0) {
        Vec3 n = p.normalized();
        if (n.dot(d) > 0.0) n = -n;
        return SurfaceHit{*t, n};
      }
    }
    const auto t = exit_distance(origin, d, outer);
    if (!t) return std::nullopt;
    return SurfaceHit{*t, -(origin + *t * d).normalized()};
  }

  bool contains(const Vec3& p) const { return p.norm() < inner; }
};

inline std::vector<float> costs_of(const PlaneMap& map) {
  std::vector<float> out;
  for (const auto& c : map.cells().values()) out.push_back(c.cost);
  return out;
}

inline bool same_cells(const PlaneMap& a, const PlaneMap& b) {
  if (!(a.camera() == b.camera())) return false;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const PlaneCell& p = a.at(x, y);
      const PlaneCell& q = b.at(x, y);
      if (p.valid != q.valid || p.normal != q.normal || p.offset != q.offset || p.depth != q.depth) return false;
      if (p.cost != q.cost && !(std::isinf(p.cost) && std::isinf(q.cost))) return false;
    }
  }
  return true;
}

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("panodense_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace panodense::testing
