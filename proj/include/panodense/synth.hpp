#pragma once

// Synthetic closed scenes with analytic ray casting, procedural texture and
// straight in-and-out trajectories. Used as ground truth for the densifier.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panodense/errors.hpp"
#include "panodense/parallel.hpp"
#include "panodense/patchmatch.hpp"
#include "panodense/raster.hpp"
#include "panodense/sphere_geometry.hpp"

namespace panodense {

struct SurfaceHit {
  double distance = 0.0;
  /// Unit surface normal facing the ray origin (world frame).
  Vec3 normal;
};

template <typename S>
concept RayCastScene = requires(const S& scene, const Vec3& origin, const Vec3& direction) {
  { scene.intersect(origin, direction) } -> std::same_as<std::optional<SurfaceHit>>;
  { scene.contains(origin) } -> std::same_as<bool>;
};

struct TextureSpec {
  enum class Kind { value_noise, checker };
  Kind kind = Kind::value_noise;
  /// Cycles per meter of the coarsest octave.
  double base_frequency = 3.0;
  int octaves = 4;
  double checker_size = 0.25;
  double contrast = 2.2;
  std::uint64_t seed = 7;
};

namespace detail {

inline double lattice_value(std::int64_t i, std::int64_t j, std::int64_t k, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(i));
  h = mix64(h ^ static_cast<std::uint64_t>(j));
  h = mix64(h ^ static_cast<std::uint64_t>(k));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

/// Smooth 3D value noise in [0, 1).
inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy), k = static_cast<std::int64_t>(fz);
  const double u = fade(p.x() - fx), v = fade(p.y() - fy), w = fade(p.z() - fz);
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double c00 = lerp(lattice_value(i, j, k, seed), lattice_value(i + 1, j, k, seed), u);
  const double c10 = lerp(lattice_value(i, j + 1, k, seed), lattice_value(i + 1, j + 1, k, seed), u);
  const double c01 = lerp(lattice_value(i, j, k + 1, seed), lattice_value(i + 1, j, k + 1, seed), u);
  const double c11 = lerp(lattice_value(i, j + 1, k + 1, seed), lattice_value(i + 1, j + 1, k + 1, seed), u);
  return lerp(lerp(c00, c10, v), lerp(c01, c11, v), w);
}

inline double fractal_noise(const Vec3& p, double frequency, int octaves, std::uint64_t seed) {
  double sum = 0.0, norm = 0.0, amplitude = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amplitude * value_noise(p * frequency, seed + static_cast<std::uint64_t>(o) * 1013);
    norm += amplitude;
    amplitude *= 0.5;
    frequency *= 2.0;
  }
  return sum / norm;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Linear RGB in [0, 1] of the texture at a world point.
inline Vec3 texture_color(const TextureSpec& texture, const Vec3& p) {
  if (texture.kind == TextureSpec::Kind::checker) {
    const auto cell = [&](double c) { return static_cast<std::int64_t>(std::floor(c / texture.checker_size)); };
    const bool odd = ((cell(p.x()) + cell(p.y()) + cell(p.z())) & 1) != 0;
    const double g = odd ? 0.8 : 0.2;
    return {g, g, g};
  }
  const double n = detail::fractal_noise(p, texture.base_frequency, texture.octaves, texture.seed);
  const double g = 0.5 + texture.contrast * (n - 0.5);
  const double tint_r = detail::value_noise(p * 0.7, texture.seed + 71);
  const double tint_b = detail::value_noise(p * 0.7, texture.seed + 97);
  return {g * (0.85 + 0.3 * tint_r), g, g * (0.85 + 0.3 * tint_b)};
}

/// Closed scene: the interior of an axis-aligned box (room or corridor) or of
/// a sphere, centered at the world origin.
struct SyntheticScene {
  enum class Kind { box_room, corridor, sphere_shell };

  Kind kind = Kind::box_room;
  /// Full box extents along x, y, z (box kinds).
  Vec3 dimensions{4.0, 3.0, 5.0};
  double radius = 2.0;
  TextureSpec texture;
  std::vector<RigidPose> trajectory;

  bool is_box() const { return kind != Kind::sphere_shell; }

  std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& direction) const {
    const Vec3 d = direction.normalized();
    if (is_box()) {
      const Vec3 half = 0.5 * dimensions;
      double best = std::numeric_limits<double>::infinity();
      int axis = -1;
      for (int i = 0; i < 3; ++i) {
        if (d[i] == 0.0) continue;
        const double bound = d[i] > 0.0 ? half[i] : -half[i];
        const double t = (bound - origin[i]) / d[i];
        if (t > 0.0 && t < best) {
          best = t;
          axis = i;
        }
      }
      if (axis < 0) return std::nullopt;
      Vec3 n = Vec3::Zero();
      n[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
      return SurfaceHit{best, n};
    }
    const double b = origin.dot(d);
    const double c = origin.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double t = -b + std::sqrt(disc);
    if (!(t > 0.0)) return std::nullopt;
    return SurfaceHit{t, -(origin + t * d).normalized()};
  }

  bool contains(const Vec3& p) const { return contains(p, 0.0); }

  bool contains(const Vec3& p, double margin) const {
    if (is_box()) {
      const Vec3 half = 0.5 * dimensions;
      return (p.cwiseAbs().array() < (half.array() - margin)).all();
    }
    return p.norm() < radius - margin;
  }

  void validate() const {
    if (is_box() && !(dimensions.minCoeff() > 0.0)) throw DomainError("scene dimensions must be positive");
    if (!is_box() && !(radius > 0.0)) throw DomainError("sphere shell radius must be positive");
    for (size_t i = 0; i < trajectory.size(); ++i) {
      if (!contains(trajectory[i].translation, 0.05)) {
        throw DomainError("trajectory pose " + std::to_string(i) + " is not strictly inside the scene");
      }
    }
  }
};

inline const char* to_string(SyntheticScene::Kind kind) {
  switch (kind) {
    case SyntheticScene::Kind::box_room: return "box_room";
    case SyntheticScene::Kind::corridor: return "corridor";
    case SyntheticScene::Kind::sphere_shell: return "sphere_shell";
  }
  return "unknown";
}

inline std::optional<SyntheticScene::Kind> parse_scene_kind(const std::string& name) {
  if (name == "box_room" || name == "room") return SyntheticScene::Kind::box_room;
  if (name == "corridor") return SyntheticScene::Kind::corridor;
  if (name == "sphere_shell" || name == "sphere") return SyntheticScene::Kind::sphere_shell;
  return std::nullopt;
}

/// Straight line out along `direction` and straight back, shifted sideways by
/// `return_offset`. The camera faces the direction of travel.
inline std::vector<RigidPose> in_and_out_trajectory(const Vec3& start, const Vec3& direction, double step,
                                                    int count, const Vec3& return_offset) {
  std::vector<RigidPose> poses;
  const Vec3 dir = direction.normalized();
  const double yaw = std::atan2(dir.x(), dir.z());
  const int forward = (count + 1) / 2;
  for (int i = 0; i < count; ++i) {
    RigidPose pose;
    if (i < forward) {
      pose.rotation = rotation_about_y(yaw);
      pose.translation = start + (i * step) * dir;
    } else {
      const int back = i - forward;
      pose.rotation = rotation_about_y(yaw + kPi);
      pose.translation = start + ((forward - 1 - back) * step) * dir + return_offset;
    }
    poses.push_back(pose);
  }
  return poses;
}

/// Default scenes with a trajectory of `keyframes` poses centered in the
/// scene. `step` <= 0 picks the scene default.
inline SyntheticScene make_scene(SyntheticScene::Kind kind, int keyframes, double step = 0.0) {
  SyntheticScene scene;
  scene.kind = kind;
  Vec3 offset = Vec3::Zero();
  switch (kind) {
    case SyntheticScene::Kind::box_room:
      scene.dimensions = {4.0, 3.0, 5.0};
      if (step <= 0.0) step = 0.2;
      offset = {0.3, 0.0, 0.0};
      break;
    case SyntheticScene::Kind::corridor:
      scene.dimensions = {3.0, 2.5, 16.0};
      if (step <= 0.0) step = 0.4;
      offset = {0.4, 0.0, 0.0};
      break;
    case SyntheticScene::Kind::sphere_shell:
      scene.radius = 3.0;
      if (step <= 0.0) step = 0.15;
      offset = {0.2, 0.0, 0.0};
      break;
  }
  const int forward = (keyframes + 1) / 2;
  const Vec3 start(-0.5 * offset.x(), 0.1, -0.5 * (forward - 1) * step);
  scene.trajectory = in_and_out_trajectory(start, Vec3::UnitZ(), step, keyframes, offset);
  scene.validate();
  return scene;
}

struct RenderResult {
  ColorImage image;
  DepthPanorama depth;
  /// Ground-truth surface normals in the camera frame.
  Raster<Vec3f> normals;
};

namespace detail {

/// Viewing direction of a continuous pixel position without range checks.
inline Vec3 direction_at(const EquirectCamera& camera, double x, double y) {
  const double lon = 2.0 * kPi * (x + 0.5) / camera.width() - kPi;
  const double lat = kPi / 2 - kPi * (y + 0.5) / camera.height();
  const double cos_lat = std::cos(lat);
  return {cos_lat * std::sin(lon), -std::sin(lat), cos_lat * std::cos(lon)};
}

}  // namespace detail

/// Ray casts the scene from `pose`: depth and normal from the pixel center ray,
/// color averaged over supersample^2 sub-pixel rays.
template <RayCastScene Scene>
RenderResult render_scene(const Scene& scene, const TextureSpec& texture, const EquirectCamera& camera,
                          const RigidPose& pose, int supersample = 2, int workers = 0) {
  if (!scene.contains(pose.translation)) throw DomainError("render pose lies outside the scene");
  RenderResult out{ColorImage(camera.width(), camera.height()), DepthPanorama(camera),
                   Raster<Vec3f>(camera.width(), camera.height())};
  const int s = std::max(1, supersample);
  const Mat3 rot_t = pose.rotation.transpose();
  parallel_for(0, camera.height(), workers, [&](int y) {
    for (int x = 0; x < camera.width(); ++x) {
      const Vec3 center_dir = pose.rotation * pixel_to_ray(camera, Vec2(x, y));
      if (const auto hit = scene.intersect(pose.translation, center_dir)) {
        out.depth.set(x, y, static_cast<float>(hit->distance));
        out.normals.at(x, y) = (rot_t * hit->normal).template cast<float>();
      }
      Vec3 color = Vec3::Zero();
      int n = 0;
      for (int sy = 0; sy < s; ++sy) {
        for (int sx = 0; sx < s; ++sx) {
          const double px = x + (sx + 0.5) / s - 0.5;
          const double py = y + (sy + 0.5) / s - 0.5;
          const Vec3 dir = pose.rotation * detail::direction_at(camera, px, py);
          if (const auto hit = scene.intersect(pose.translation, dir)) {
            color += texture_color(texture, pose.translation + hit->distance * dir.normalized());
            ++n;
          }
        }
      }
      if (n > 0) color /= n;
      out.image.at(x, y) = {detail::to_byte(color.x()), detail::to_byte(color.y()), detail::to_byte(color.z())};
    }
  });
  return out;
}

inline RenderResult render_scene(const SyntheticScene& scene, const EquirectCamera& camera, const RigidPose& pose,
                                 int supersample = 2, int workers = 0) {
  return render_scene(scene, scene.texture, camera, pose, supersample, workers);
}

/// Plane map holding the exact surface plane at every rendered pixel.
inline PlaneMap ground_truth_plane_map(const RenderResult& render, float cost = 0.0f) {
  PlaneMap map(render.depth.camera);
  const BearingTable rays(render.depth.camera);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!render.depth.is_valid(x, y)) continue;
      map.at(x, y) = make_cell(rays.at(x, y), render.depth.depth.at(x, y), render.normals.at(x, y), cost);
    }
  }
  return map;
}

}  // namespace panodense
