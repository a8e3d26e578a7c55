#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "panodense/errors.hpp"
#include "panodense/patchmatch.hpp"

namespace panodense {

struct ConsistencyConfig {
  int window = 5;
  int min_support = 2;
  double rel_depth_tol = 0.01;

  void validate() const {
    if (window < 2) throw ConfigError("consistency.window must be >= 2");
    if (min_support < 1 || min_support >= window) {
      throw ConfigError("consistency.min_support must satisfy 1 <= min_support < consistency.window (" +
                        std::to_string(window) + "), got " + std::to_string(min_support));
    }
    if (!(rel_depth_tol > 0.0)) throw ConfigError("consistency.rel_depth_tol must be > 0");
  }
};

/// Depth panorama of one keyframe with everything later stages need.
struct DepthFrame {
  std::int64_t id = 0;
  DepthPanorama depth;
  RigidPose pose;
  /// Keyframe colors at the depth resolution.
  std::shared_ptr<const ColorImage> color;
};

struct PosedDepth {
  const DepthPanorama* depth = nullptr;
  RigidPose pose;
};

inline bool depth_matches(double stored, double projected, double rel_tol) {
  return stored > 0.0 && std::abs(projected - stored) <= rel_tol * stored;
}

/// True when `map` holds a depth matching `projected` at continuous pixel
/// (u, v): either at the nearest pixel or bilinearly interpolated from four
/// valid neighbors.
inline bool map_supports(const DepthPanorama& map, double u, double v, double projected, double rel_tol) {
  const int w = map.width();
  const int h = map.height();
  const int nx = wrap_column(static_cast<int>(std::lround(u)), w);
  const int ny = std::clamp(static_cast<int>(std::lround(v)), 0, h - 1);
  if (map.is_valid(nx, ny) && depth_matches(map.depth.at(nx, ny), projected, rel_tol)) return true;
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const int x0 = wrap_column(static_cast<int>(fu), w);
  const int x1 = wrap_column(x0 + 1, w);
  const int y0 = std::clamp(static_cast<int>(fv), 0, h - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  if (!map.is_valid(x0, y0) || !map.is_valid(x1, y0) || !map.is_valid(x0, y1) || !map.is_valid(x1, y1)) {
    return false;
  }
  const double du = u - fu;
  const double dv = std::clamp(v - fv, 0.0, 1.0);
  const double top = (1 - du) * map.depth.at(x0, y0) + du * map.depth.at(x1, y0);
  const double bottom = (1 - du) * map.depth.at(x0, y1) + du * map.depth.at(x1, y1);
  return depth_matches((1 - dv) * top + dv * bottom, projected, rel_tol);
}

/// Keeps a target depth only if at least min_support of the other maps see
/// the same 3D point at a matching depth. Never adds or alters depths.
inline DepthPanorama consistency_filter(const DepthPanorama& target, const RigidPose& target_pose,
                                        std::span<const PosedDepth> others, const ConsistencyConfig& config) {
  config.validate();
  for (const auto& o : others) {
    if (!o.depth || !(o.depth->camera == target.camera)) {
      throw DomainError("consistency filter needs depth maps of one resolution");
    }
  }
  DepthPanorama out(target.camera);
  const int w = target.width();
  std::vector<Mat3> rot_t;
  for (const auto& o : others) rot_t.push_back(o.pose.rotation.transpose());
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      if (!target.is_valid(x, y)) continue;
      const double d = target.depth.at(x, y);
      const Vec3 world = target_pose.apply(d * pixel_to_ray(target.camera, Vec2(x, y)));
      int support = 0;
      for (size_t j = 0; j < others.size() && support < config.min_support; ++j) {
        const Vec3 local = rot_t[j] * (world - others[j].pose.translation);
        const double projected = local.norm();
        if (!(projected > 1e-9)) continue;
        const Vec2 px = ray_to_pixel(target.camera, local);
        if (map_supports(*others[j].depth, px.x(), px.y(), projected, config.rel_depth_tol)) ++support;
      }
      if (support >= config.min_support) out.set(x, y, static_cast<float>(d));
    }
  }
  return out;
}

/// Sliding window of depth maps. Once `window` maps are queued the center map
/// is filtered against the others; the first maps of a sequence are filtered
/// with the first full window and the last ones on flush.
class ConsistencyStage {
 public:
  explicit ConsistencyStage(ConsistencyConfig config) : config_(config) { config_.validate(); }

  /// Queues a raw depth frame and returns frames whose filtering completed.
  std::vector<DepthFrame> push(DepthFrame frame) {
    entries_.push_back({std::move(frame), false});
    std::vector<DepthFrame> out;
    const int n = static_cast<int>(entries_.size());
    if (n >= config_.window) {
      const int first = n - config_.window;
      const int center = n - 1 - config_.window / 2;
      for (int i = first; i <= center; ++i) {
        if (!entries_[i].filtered) out.push_back(filter_entry(i, first, n));
      }
    }
    while (static_cast<int>(entries_.size()) > config_.window && entries_.front().filtered) entries_.pop_front();
    return out;
  }

  /// Filters every queued frame not processed yet against the remaining
  /// frames. Frames that cannot reach min_support are dropped.
  std::vector<DepthFrame> flush() {
    std::vector<DepthFrame> out;
    const int n = static_cast<int>(entries_.size());
    const int first = std::max(0, n - config_.window);
    if (n - first - 1 >= config_.min_support) {
      for (int i = first; i < n; ++i) {
        if (!entries_[i].filtered) out.push_back(filter_entry(i, first, n));
      }
    }
    entries_.clear();
    return out;
  }

 private:
  struct Entry {
    DepthFrame frame;
    bool filtered = false;
  };

  DepthFrame filter_entry(int target, int first, int end) {
    std::vector<PosedDepth> others;
    for (int j = first; j < end; ++j) {
      if (j != target) others.push_back({&entries_[j].frame.depth, entries_[j].frame.pose});
    }
    Entry& e = entries_[target];
    DepthFrame result{e.frame.id, consistency_filter(e.frame.depth, e.frame.pose, others, config_), e.frame.pose,
                      e.frame.color};
    e.filtered = true;
    return result;
  }

  ConsistencyConfig config_;
  std::deque<Entry> entries_;
};

}  // namespace panodense
