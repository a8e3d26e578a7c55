#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "panodense/dataset.hpp"
#include "panodense/depth_io.hpp"
#include "panodense/synth.hpp"

namespace panodense {

struct SyntheticDatasetOptions {
  EquirectCamera camera{512, 256};
  int sparse_density = 200;
  /// Fraction of the previous keyframe's landmarks kept in the next one.
  double carry_fraction = 0.75;
  int supersample = 2;
  std::uint64_t seed = 1;
  bool write_ground_truth = true;
  int workers = 0;
};

namespace detail {

/// World surface point seen along a random viewing direction from `pose`.
inline std::optional<Vec3> random_surface_point(const SyntheticScene& scene, const RigidPose& pose,
                                                std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Vec3 dir(n(rng), n(rng), n(rng));
    if (!(dir.norm() > 1e-6)) continue;
    if (const auto hit = scene.intersect(pose.translation, dir)) {
      return pose.translation + hit->distance * dir.normalized();
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Renders every trajectory pose of `scene` into a dataset directory.
/// Landmarks are surface points; each keyframe keeps carry_fraction of its
/// predecessor's landmarks (scenes are convex, so they stay visible) and
/// samples the rest anew.
inline Dataset make_dataset(const SyntheticScene& scene, const std::filesystem::path& out_dir,
                            const SyntheticDatasetOptions& options) {
  if (scene.trajectory.size() < 3) throw DomainError("a synthetic dataset needs at least 3 keyframes");
  if (options.sparse_density < 1) throw ConfigError("sparse density must be >= 1");
  std::filesystem::create_directories(out_dir / "images");
  if (options.write_ground_truth) std::filesystem::create_directories(out_dir / "depth_gt");

  Dataset ds;
  ds.root = out_dir;
  ds.camera = options.camera;
  std::mt19937_64 rng(options.seed);
  std::int64_t next_landmark = 0;
  std::vector<Vec3> prev_points;
  std::vector<std::int64_t> prev_ids;
  const auto density = static_cast<std::size_t>(options.sparse_density);

  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const RigidPose& pose = scene.trajectory[i];
    const RenderResult render = render_scene(scene, options.camera, pose, options.supersample, options.workers);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%06zu", i);

    KeyframeRecord rec;
    rec.id = static_cast<std::int64_t>(i);
    rec.image = std::string("images/") + stem + ".png";
    rec.pose = pose;
    write_color_png(out_dir / rec.image, render.image);
    if (options.write_ground_truth) {
      rec.depth_gt = std::string("depth_gt/") + stem + ".png";
      write_depth_png(out_dir / rec.depth_gt, render.depth);
    }

    const auto carry = std::min(prev_points.size(),
                                static_cast<std::size_t>(std::lround(options.carry_fraction * density)));
    std::vector<std::size_t> order(prev_points.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < carry; ++j) {
      rec.sparse_points.push_back(prev_points[order[j]]);
      rec.sparse_ids.push_back(prev_ids[order[j]]);
    }
    while (rec.sparse_points.size() < density) {
      const auto p = detail::random_surface_point(scene, pose, rng);
      if (!p) throw DomainError("scene has no visible surface from keyframe " + std::to_string(i));
      rec.sparse_points.push_back(*p);
      rec.sparse_ids.push_back(next_landmark++);
    }
    prev_points = rec.sparse_points;
    prev_ids = rec.sparse_ids;
    ds.keyframes.push_back(std::move(rec));
  }
  save_manifest(ds);
  return ds;
}

}  // namespace panodense
