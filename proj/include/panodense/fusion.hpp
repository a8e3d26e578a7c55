#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <utility>
#include <span>
#include <vector>

#include "panodense/consistency.hpp"
#include "panodense/errors.hpp"

namespace panodense {

struct FusionConfig {
  int buffer = 4;
  /// A candidate is a duplicate when it projects within this many pixels of a
  /// newer frame pixel holding a matching depth.
  double pixel_radius = 1.0;
  double rel_depth_tol = 0.01;
  bool erase_duplicates = true;

  void validate() const {
    if (buffer < 1) throw ConfigError("fusion.buffer must be >= 1");
    if (!(pixel_radius >= 0.0)) throw ConfigError("fusion.pixel_radius must be >= 0");
    if (!(rel_depth_tol > 0.0)) throw ConfigError("fusion.rel_depth_tol must be > 0");
  }
};

struct CloudPoint {
  Vec3 position;
  Rgb8 color;
  std::int64_t source_id = 0;
};

struct FusedCloud {
  std::vector<CloudPoint> points;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// World position of pixel (x, y) of a depth frame.
inline Vec3 back_project(const DepthFrame& frame, int x, int y) {
  return frame.pose.apply(static_cast<double>(frame.depth.depth.at(x, y)) *
                          pixel_to_ray(frame.depth.camera, Vec2(x, y)));
}

/// Surface sample spacing of every valid pixel: the larger of the horizontal
/// and vertical distances to the nearest valid neighbor point, taking the
/// closer neighbor on each axis so depth edges do not inflate it. Pixels
/// without neighbors on an axis use the arc length of one pixel.
inline Raster<float> sample_spacing(const DepthFrame& frame) {
  const DepthPanorama& d = frame.depth;
  const int w = d.width();
  const int h = d.height();
  Raster<float> out(w, h, 0.0f);
  const double pixel_angle = 2.0 * kPi / w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!d.is_valid(x, y)) continue;
      const Vec3 p = back_project(frame, x, y);
      auto axis = [&](int x0, int y0, int x1, int y1) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [nx, ny] : {std::pair{x0, y0}, std::pair{x1, y1}}) {
          if (ny < 0 || ny >= h) continue;
          const int wx = wrap_column(nx, w);
          if (d.is_valid(wx, ny)) best = std::min(best, (back_project(frame, wx, ny) - p).norm());
        }
        return std::isfinite(best) ? best : d.depth.at(x, y) * pixel_angle;
      };
      out.at(x, y) = static_cast<float>(std::max(axis(x - 1, y, x + 1, y), axis(x, y - 1, x, y + 1)));
    }
  }
  return out;
}

/// A depth frame prepared for fusion.
struct FusionFrame {
  DepthFrame frame;
  Raster<float> spacing;

  explicit FusionFrame(DepthFrame f) : frame(std::move(f)), spacing(sample_spacing(frame)) {}
};

/// True when `world`, sampled with spacing `spacing` by its own frame, is
/// already represented in `other` at least as densely: a pixel within
/// pixel_radius holds a matching depth and samples no coarser.
inline bool observed_in(const FusionFrame& other, const Vec3& world, double spacing, const FusionConfig& config) {
  const DepthFrame& frame = other.frame;
  const Vec3 local = frame.pose.rotation.transpose() * (world - frame.pose.translation);
  const double projected = local.norm();
  if (!(projected > 1e-9)) return false;
  const Vec2 px = ray_to_pixel(frame.depth.camera, local);
  const int w = frame.depth.width();
  const int h = frame.depth.height();
  const int reach = static_cast<int>(std::ceil(config.pixel_radius));
  const int cx = static_cast<int>(std::lround(px.x()));
  const int cy = static_cast<int>(std::lround(px.y()));
  const double r2 = config.pixel_radius * config.pixel_radius;
  const double max_spacing = spacing * (1.0 + config.rel_depth_tol);
  for (int y = cy - reach; y <= cy + reach; ++y) {
    if (y < 0 || y >= h) continue;
    for (int x = cx - reach; x <= cx + reach; ++x) {
      const double du = x - px.x();
      const double dv = y - px.y();
      if (du * du + dv * dv > r2) continue;
      const int wx = wrap_column(x, w);
      if (frame.depth.is_valid(wx, y) && other.spacing.at(wx, y) <= max_spacing &&
          depth_matches(frame.depth.depth.at(wx, y), projected, config.rel_depth_tol)) {
        return true;
      }
    }
  }
  return false;
}

/// Appends the valid pixels of `frame` that no newer frame already covers.
/// Returns the number of points added.
inline int fuse_frame(const FusionFrame& entry, std::span<const FusionFrame* const> newer, FusedCloud& cloud,
                      const FusionConfig& config) {
  const DepthFrame& frame = entry.frame;
  int added = 0;
  for (int y = 0; y < frame.depth.height(); ++y) {
    for (int x = 0; x < frame.depth.width(); ++x) {
      if (!frame.depth.is_valid(x, y)) continue;
      const Vec3 world = back_project(frame, x, y);
      bool duplicate = false;
      if (config.erase_duplicates) {
        for (const FusionFrame* other : newer) {
          if (observed_in(*other, world, entry.spacing.at(x, y), config)) {
            duplicate = true;
            break;
          }
        }
      }
      if (duplicate) continue;
      const Rgb8 color = frame.color ? frame.color->at(x, y) : Rgb8{200, 200, 200};
      cloud.points.push_back({world, color, frame.id});
      ++added;
    }
  }
  return added;
}

/// Buffers consistent frames; when the buffer is full the oldest frame is
/// fused into the cloud, ceding duplicated points to newer frames that sample
/// them at least as densely.
class FusionStage {
 public:
  explicit FusionStage(FusionConfig config) : config_(config) { config_.validate(); }

  struct Emitted {
    std::int64_t id = 0;
    int added = 0;
  };

  std::vector<Emitted> push(DepthFrame frame, FusedCloud& cloud) {
    buffer_.emplace_back(std::move(frame));
    std::vector<Emitted> out;
    if (static_cast<int>(buffer_.size()) >= config_.buffer) out.push_back(emit_oldest(cloud));
    return out;
  }

  std::vector<Emitted> flush(FusedCloud& cloud) {
    std::vector<Emitted> out;
    while (!buffer_.empty()) out.push_back(emit_oldest(cloud));
    return out;
  }

  size_t buffered() const { return buffer_.size(); }

 private:
  Emitted emit_oldest(FusedCloud& cloud) {
    std::vector<const FusionFrame*> newer;
    for (size_t i = 1; i < buffer_.size(); ++i) newer.push_back(&buffer_[i]);
    Emitted e{buffer_.front().frame.id, fuse_frame(buffer_.front(), newer, cloud, config_)};
    buffer_.pop_front();
    return e;
  }

  FusionConfig config_;
  std::deque<FusionFrame> buffer_;
};

}  // namespace panodense
