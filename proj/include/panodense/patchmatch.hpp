#pragma once

// Equirectangular PatchMatch stereo for one reference keyframe against two
// neighbor keyframes.
//
// Hypotheses are stored as planes (unit normal n, offset o with n.X + o = 0
// in the reference camera frame) so that propagation copies a plane exactly;
// the depth along a pixel ray r is o / (-n.r).

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "panodense/errors.hpp"
#include "panodense/parallel.hpp"
#include "panodense/raster.hpp"
#include "panodense/sphere_geometry.hpp"

namespace panodense {

/// Number of random hypothesis tests per refinement call, each on a search
/// interval half as wide as the previous one.
inline constexpr int kRefinementTests = 6;

/// Minimum -n.r for a plane to count as facing a pixel ray.
inline constexpr float kMinFacing = 0.05f;

struct DepthRange {
  double min = 0.5;
  double max = 30.0;

  void validate() const {
    if (!(min > 0.0) || !(max > min) || !std::isfinite(max)) {
      throw ConfigError("depth range needs 0 < depth_min < depth_max, got [" + std::to_string(min) +
                        ", " + std::to_string(max) + "]");
    }
  }
  bool contains(double d) const { return d >= min && d <= max; }
};

struct PatchSpec {
  int half_window = 5;
  int sample_stride = 2;
  double cost_truncation = 1.2;

  static constexpr int kMaxSamples = 1024;

  int samples_per_axis() const { return 2 * (half_window / sample_stride) + 1; }

  void validate() const {
    if (half_window < 1) throw ConfigError("patchmatch.half_window must be >= 1");
    if (sample_stride < 1) throw ConfigError("patchmatch.sample_stride must be >= 1");
    if (sample_stride > half_window) {
      throw ConfigError("patchmatch.sample_stride must not exceed patchmatch.half_window");
    }
    if (samples_per_axis() * samples_per_axis() > kMaxSamples) {
      throw ConfigError("patchmatch.half_window / sample_stride yields more than 1024 samples");
    }
    if (!(cost_truncation > 0.0) || cost_truncation > 2.0) {
      throw ConfigError("patchmatch.cost_truncation must lie in (0, 2]");
    }
  }
};

struct PatchMatchOptions {
  PatchSpec patch;
  DepthRange depth_range;
  int iterations = 6;
  /// Depth search interval of the first refinement test, as a fraction of the
  /// depth range.
  double refine_depth_fraction = 0.25;
  /// Normal search radius of the first refinement test.
  double refine_normal_deg = 60.0;
  /// Pixels whose final cost exceeds this are left invalid in the depth output.
  double max_valid_cost = 0.5;
  double pole_latitude_deg = 85.0;
  int median_window = 5;
  double median_rel_threshold = 0.1;
  int workers = 0;

  void validate() const {
    patch.validate();
    depth_range.validate();
    if (iterations < 1) throw ConfigError("patchmatch.iterations must be >= 1");
    if (!(refine_depth_fraction > 0.0)) throw ConfigError("patchmatch.refine_depth_fraction must be > 0");
    if (!(refine_normal_deg > 0.0) || refine_normal_deg > 90.0) {
      throw ConfigError("patchmatch.refine_normal_deg must lie in (0, 90]");
    }
    if (!(max_valid_cost > 0.0)) throw ConfigError("patchmatch.max_valid_cost must be > 0");
    if (!(pole_latitude_deg > 0.0) || pole_latitude_deg > 90.0) {
      throw ConfigError("patchmatch.pole_latitude_deg must lie in (0, 90]");
    }
    if (median_window < 3 || median_window % 2 == 0) {
      throw ConfigError("patchmatch.median_window must be odd and >= 3");
    }
    if (!(median_rel_threshold > 0.0)) throw ConfigError("patchmatch.median_rel_threshold must be > 0");
    if (workers < 0) throw ConfigError("patchmatch.workers must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Plane map

struct PlaneCell {
  Vec3f normal{0.0f, 0.0f, -1.0f};
  float offset = 0.0f;
  float depth = 0.0f;
  float cost = std::numeric_limits<float>::infinity();
  bool valid = false;

  bool same_plane(const PlaneCell& other) const {
    return offset == other.offset && normal == other.normal;
  }
};

class PlaneMap {
 public:
  PlaneMap() = default;
  explicit PlaneMap(const EquirectCamera& camera)
      : camera_(camera), cells_(camera.width(), camera.height()) {}

  const EquirectCamera& camera() const { return camera_; }
  int width() const { return camera_.width(); }
  int height() const { return camera_.height(); }

  PlaneCell& at(int x, int y) { return cells_.at(x, y); }
  const PlaneCell& at(int x, int y) const { return cells_.at(x, y); }
  Raster<PlaneCell>& cells() { return cells_; }
  const Raster<PlaneCell>& cells() const { return cells_; }

  std::optional<PlaneHypothesis> hypothesis(int x, int y) const {
    const PlaneCell& c = at(x, y);
    if (!c.valid) return std::nullopt;
    return PlaneHypothesis{c.depth, c.normal.cast<double>()};
  }

  int valid_count() const {
    int n = 0;
    for (const auto& c : cells_.values()) n += c.valid ? 1 : 0;
    return n;
  }

 private:
  EquirectCamera camera_;
  Raster<PlaneCell> cells_;
};

/// Builds a cell from a depth/normal pair at the given pixel ray. Returns an
/// invalid cell when the plane does not face the ray.
inline PlaneCell make_cell(const Vec3f& ray, float depth, const Vec3f& normal, float cost) {
  PlaneCell cell;
  const float facing = -sym_dot(normal, ray);
  if (!(facing > kMinFacing) || !(depth > 0.0f)) return cell;
  cell.normal = normal;
  cell.offset = depth * facing;
  cell.depth = depth;
  cell.cost = cost;
  cell.valid = true;
  return cell;
}

/// Stores a hypothesis at pixel (x, y) of a map.
inline void set_hypothesis(PlaneMap& map, const BearingTable& rays, int x, int y,
                           const PlaneHypothesis& h, float cost) {
  map.at(x, y) = make_cell(rays.at(x, y), static_cast<float>(h.depth),
                           sym_normalized(h.normal.cast<float>()), cost);
}

// ---------------------------------------------------------------------------
// Deterministic per-pixel random streams

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Random stream for one pixel and one algorithm step. Columns are keyed
/// modulo a quarter of the width, so a 90 degree roll of the input replays the
/// same random draws at the rolled pixels.
inline std::minstd_rand pixel_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                                  int x, int y, int width) {
  const int period = width % 4 == 0 ? width / 4 : width;
  std::uint64_t h = detail::mix64(seed);
  h = detail::mix64(h ^ stream);
  h = detail::mix64(h ^ step);
  h = detail::mix64(h ^ static_cast<std::uint64_t>(y));
  h = detail::mix64(h ^ static_cast<std::uint64_t>(x % period));
  return std::minstd_rand(static_cast<std::uint32_t>(h % 2147483646ULL) + 1U);
}

namespace detail {

inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamRefine = 2;

inline float uniform(std::minstd_rand& rng, float lo, float hi) {
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}

/// Random unit normal within `max_angle` of `axis`; the tangent frame is
/// taken from the pixel ray.
inline Vec3f perturb_normal(std::minstd_rand& rng, const Vec3f& axis, const Vec3f& ray,
                            float max_angle) {
  Vec3f east, north;
  tangent_basis(ray, east, north);
  Vec3f e1 = east - sym_dot(east, axis) * axis;
  if (sym_dot(e1, e1) < 1e-8f) e1 = north - sym_dot(north, axis) * axis;
  e1 = sym_normalized(e1);
  const Vec3f e2 = sym_cross(axis, e1);
  const float angle = uniform(rng, 0.0f, max_angle);
  const float azimuth = uniform(rng, 0.0f, 2.0f * static_cast<float>(kPi));
  Vec3f n = std::cos(angle) * axis +
            std::sin(angle) * (std::cos(azimuth) * e1 + std::sin(azimuth) * e2);
  return sym_normalized(n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stereo group and matching cost

struct StereoView {
  std::shared_ptr<const GrayImage> image;
  RigidPose pose;
};

/// Reference keyframe plus its two neighbors, all at the processing
/// resolution of `camera`.
struct StereoGroup {
  EquirectCamera camera;
  StereoView reference;
  std::array<StereoView, 2> neighbors;

  void validate() const {
    auto check = [&](const StereoView& v, const char* name) {
      if (!v.image || v.image->width() != camera.width() || v.image->height() != camera.height()) {
        throw DomainError(std::string("stereo group ") + name + " image does not match the camera");
      }
      if (!v.pose.is_valid(1e-6)) throw DomainError(std::string("stereo group ") + name + " pose invalid");
    };
    if (camera.width() % 4 != 0) throw DomainError("stereo group camera width must be a multiple of 4");
    check(reference, "reference");
    check(neighbors[0], "neighbor 0");
    check(neighbors[1], "neighbor 1");
    for (const auto& n : neighbors) {
      if ((n.pose.translation - reference.pose.translation).norm() <= 0.0) {
        throw DomainError("stereo group neighbor shares the reference camera center");
      }
    }
  }
};

/// Truncated 1 - NCC between a reference patch and its plane-induced
/// footprints in both neighbors, averaged over the neighbors.
class PatchCostEvaluator {
 public:
  PatchCostEvaluator(const StereoGroup& group, const PatchSpec& spec)
      : camera_(group.camera), spec_(spec), rays_(group.camera), reference_(group.reference.image) {
    group.validate();
    spec.validate();
    const int k = spec.half_window / spec.sample_stride;
    for (int dy = -k; dy <= k; ++dy) {
      for (int dx = -k; dx <= k; ++dx) {
        offsets_.push_back({dx * spec.sample_stride, dy * spec.sample_stride});
      }
    }
    const Mat3& r_ref = group.reference.pose.rotation;
    const Vec3& t_ref = group.reference.pose.translation;
    for (size_t i = 0; i < 2; ++i) {
      const auto& nb = group.neighbors[i];
      const Mat3 r_nb_t = nb.pose.rotation.transpose();
      neighbors_[i].image = nb.image;
      neighbors_[i].rotation = (r_nb_t * r_ref).cast<float>();
      neighbors_[i].translation = (r_nb_t * (t_ref - nb.pose.translation)).cast<float>();
    }
  }

  const EquirectCamera& camera() const { return camera_; }
  const BearingTable& rays() const { return rays_; }
  const PatchSpec& spec() const { return spec_; }
  float truncation() const { return static_cast<float>(spec_.cost_truncation); }

  /// Cost of the plane (normal, offset) at reference pixel (x, y). When the
  /// first neighbor alone already proves the cost cannot drop below `bound`,
  /// evaluation stops early and a value >= bound is returned.
  float cost(int x, int y, const Vec3f& normal, float offset,
             float bound = std::numeric_limits<float>::infinity()) const {
    const float trunc = truncation();
    if (!(offset > 0.0f)) return trunc;
    const int w = camera_.width();
    const int h = camera_.height();
    const size_t total = offsets_.size();

    alignas(32) std::array<float, PatchSpec::kMaxSamples> px, py, pz, ref_values;
    int count = 0;
    float sum = 0.0f, sum_sq = 0.0f;
    for (const auto& [dx, dy] : offsets_) {
      const int sy = y + dy;
      if (sy < 0 || sy >= h) continue;
      const int sx = wrap_column(x + dx, w);
      const Vec3f& ray = rays_.at(sx, sy);
      const float facing = -sym_dot(normal, ray);
      if (facing <= 1e-4f) continue;
      const float depth = offset / facing;
      px[count] = depth * ray.x();
      py[count] = depth * ray.y();
      pz[count] = depth * ray.z();
      const float v = reference_->at(sx, sy);
      ref_values[count] = v;
      sum += v;
      sum_sq += v * v;
      ++count;
    }
    if (2 * static_cast<size_t>(count) < total) return trunc;
    const float inv_count = 1.0f / static_cast<float>(count);
    const float mean_ref = sum * inv_count;
    const float var_ref = sum_sq * inv_count - mean_ref * mean_ref;
    if (var_ref < kMinVariance) return trunc;
    for (int i = 0; i < count; ++i) ref_values[i] -= mean_ref;

    alignas(32) std::array<int, PatchSpec::kMaxSamples> cols;
    alignas(32) std::array<float, PatchSpec::kMaxSamples> fracs, rows;
    const int quarter = w / 4;
    float accumulated = 0.0f;
    for (size_t k = 0; k < 2; ++k) {
      const NeighborView& nb = neighbors_[k];
      const Eigen::Matrix3f& r = nb.rotation;
      const Vec3f& t = nb.translation;
      for (int i = 0; i < count; ++i) {
        const Vec3f q((r(0, 0) * px[i] + r(0, 2) * pz[i]) + r(0, 1) * py[i] + t.x(),
                      (r(1, 0) * px[i] + r(1, 2) * pz[i]) + r(1, 1) * py[i] + t.y(),
                      (r(2, 0) * px[i] + r(2, 2) * pz[i]) + r(2, 1) * py[i] + t.z());
        const QuarterProjection p = project_quartered(q, w, h);
        // local_u is positive, so truncation is floor.
        const int iu = static_cast<int>(p.local_u);
        fracs[i] = p.local_u - static_cast<float>(iu);
        cols[i] = iu + p.quarter_index * quarter;
        rows[i] = p.v;
      }
      float s = 0.0f, ss = 0.0f, cross = 0.0f;
      for (int i = 0; i < count; ++i) {
        const float val = sample_bilinear_column(*nb.image, wrap_column(cols[i], w), fracs[i], rows[i]);
        s += val;
        ss += val * val;
        cross += ref_values[i] * val;
      }
      const float mean_nb = s * inv_count;
      const float var_nb = ss * inv_count - mean_nb * mean_nb;
      float c = trunc;
      if (var_nb >= kMinVariance) {
        const float ncc = (cross * inv_count) / std::sqrt(var_ref * var_nb);
        c = std::clamp(1.0f - ncc, 0.0f, trunc);
      }
      accumulated += c;
      if (k == 0 && 0.5f * accumulated >= bound) return 0.5f * accumulated;
    }
    return 0.5f * accumulated;
  }

  float cost(int x, int y, const PlaneCell& cell, float bound = std::numeric_limits<float>::infinity()) const {
    if (!cell.valid) return truncation();
    return cost(x, y, cell.normal, cell.offset, bound);
  }

  float cost(int x, int y, const PlaneHypothesis& h) const {
    const PlaneCell cell = make_cell(rays_.at(x, y), static_cast<float>(h.depth),
                                     sym_normalized(h.normal.cast<float>()), 0.0f);
    return cost(x, y, cell);
  }

 private:
  static constexpr float kMinVariance = 1e-5f;

  struct NeighborView {
    std::shared_ptr<const GrayImage> image;
    Eigen::Matrix3f rotation;
    Vec3f translation;
  };

  EquirectCamera camera_;
  PatchSpec spec_;
  BearingTable rays_;
  std::shared_ptr<const GrayImage> reference_;
  std::array<NeighborView, 2> neighbors_;
  std::vector<std::pair<int, int>> offsets_;
};

/// Matching cost of one hypothesis at one reference pixel.
inline float patch_cost(const StereoGroup& group, int x, int y, const PlaneHypothesis& hypothesis,
                        const PatchSpec& spec) {
  return PatchCostEvaluator(group, spec).cost(x, y, hypothesis);
}

// ---------------------------------------------------------------------------
// Initialization

/// Fills pixels with random front-facing planes. Depths are drawn uniformly in
/// inverse depth over `range`. With `only_unfilled`, valid cells are kept.
inline void random_init(PlaneMap& map, const DepthRange& range, std::uint64_t seed,
                        bool only_unfilled = false) {
  range.validate();
  const BearingTable rays(map.camera());
  const float inv_lo = static_cast<float>(1.0 / range.max);
  const float inv_hi = static_cast<float>(1.0 / range.min);
  const float max_tilt = static_cast<float>(deg_to_rad(70.0));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      PlaneCell& cell = map.at(x, y);
      if (only_unfilled && cell.valid) continue;
      auto rng = pixel_rng(seed, detail::kStreamInit, 0, x, y, map.width());
      const Vec3f& ray = rays.at(x, y);
      const float inv = detail::uniform(rng, inv_lo, inv_hi);
      const float depth = std::clamp(1.0f / inv, static_cast<float>(range.min), static_cast<float>(range.max));
      const Vec3f normal = detail::perturb_normal(rng, -ray, ray, max_tilt);
      cell = make_cell(ray, depth, normal, std::numeric_limits<float>::infinity());
      if (!cell.valid) cell = make_cell(ray, depth, -ray, std::numeric_limits<float>::infinity());
    }
  }
}

inline PlaneMap random_init(const EquirectCamera& camera, const DepthRange& range, std::uint64_t seed) {
  PlaneMap map(camera);
  random_init(map, range, seed);
  return map;
}

/// Transfers the optimized planes of the previous keyframe into the current
/// camera. Each valid source pixel is lifted to a 3D point and normal, moved
/// into the current frame and splatted onto the nearest target pixel; when
/// several sources land on one pixel the one with the lower source cost wins.
/// Target pixels nobody reached stay invalid.
inline PlaneMap warp_plane_map(const PlaneMap& previous, const RigidPose& pose_prev,
                               const RigidPose& pose_cur, const EquirectCamera& camera,
                               const DepthRange& range) {
  PlaneMap out(camera);
  const BearingTable src_rays(previous.camera());
  const BearingTable dst_rays(camera);
  const Mat3 rotation = pose_cur.rotation.transpose() * pose_prev.rotation;
  for (int y = 0; y < previous.height(); ++y) {
    for (int x = 0; x < previous.width(); ++x) {
      const PlaneCell& src = previous.at(x, y);
      if (!src.valid) continue;
      const Vec3 point = transform_point(pose_prev, pose_cur,
                                         static_cast<double>(src.depth) * src_rays.at(x, y).cast<double>());
      if (!(point.norm() > 1e-9)) continue;
      const Vec3 normal = (rotation * src.normal.cast<double>()).normalized();
      const Vec2 pixel = ray_to_pixel(camera, point);
      const int tx = wrap_column(static_cast<int>(std::lround(pixel.x())), camera.width());
      const int ty = std::min(static_cast<int>(std::lround(pixel.y())), camera.height() - 1);
      const Vec3 ray = dst_rays.at(tx, ty).cast<double>();
      const double facing = -normal.dot(ray);
      const double offset = -normal.dot(point);
      if (facing <= kMinFacing || offset <= 0.0) continue;
      const double depth = offset / facing;
      if (!range.contains(depth)) continue;
      PlaneCell& dst = out.at(tx, ty);
      if (dst.valid && dst.cost <= src.cost) continue;
      dst.normal = normal.cast<float>();
      dst.offset = static_cast<float>(offset);
      dst.depth = static_cast<float>(depth);
      dst.cost = src.cost;
      dst.valid = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Propagation and refinement

enum class Parity { red = 0, black = 1 };

/// Opposite-parity neighborhood: the four adjacent pixels plus four at
/// distance three along the axes.
inline constexpr std::array<std::array<int, 2>, 8> kPropagationOffsets{{
    {{-1, 0}}, {{1, 0}}, {{0, -1}}, {{0, 1}}, {{-3, 0}}, {{3, 0}}, {{0, -3}}, {{0, 3}}}};

/// Lets pixel (x, y) adopt the best neighbor plane. Returns the number of cost
/// evaluations performed.
inline int propagate_pixel(PlaneMap& map, const PatchCostEvaluator& evaluator, int x, int y,
                           const DepthRange& range) {
  const int w = map.width();
  const int h = map.height();
  PlaneCell& self = map.at(x, y);
  const Vec3f& ray = evaluator.rays().at(x, y);
  std::array<const PlaneCell*, kPropagationOffsets.size()> tried{};
  size_t n_tried = 0;
  int evaluations = 0;
  for (const auto& [dx, dy] : kPropagationOffsets) {
    const int ny = y + dy;
    if (ny < 0 || ny >= h) continue;
    const PlaneCell& cand = map.at(wrap_column(x + dx, w), ny);
    if (!cand.valid) continue;
    if (self.valid && cand.same_plane(self)) continue;
    bool seen = false;
    for (size_t i = 0; i < n_tried && !seen; ++i) seen = tried[i]->same_plane(cand);
    if (seen) continue;
    tried[n_tried++] = &cand;
    const float facing = -sym_dot(cand.normal, ray);
    if (facing <= kMinFacing) continue;
    const float depth = cand.offset / facing;
    if (!range.contains(depth)) continue;
    const float c = evaluator.cost(x, y, cand.normal, cand.offset, self.cost);
    ++evaluations;
    if (c < self.cost) {
      self.normal = cand.normal;
      self.offset = cand.offset;
      self.depth = depth;
      self.cost = c;
      self.valid = true;
    }
  }
  return evaluations;
}

/// One propagation half-step: every pixel of `parity` evaluates the planes of
/// its opposite-parity neighbors. Only opposite-parity cells are read, so the
/// update is independent of pixel processing order. Column indices wrap.
inline void red_black_iteration(PlaneMap& map, const PatchCostEvaluator& evaluator, Parity parity,
                                const DepthRange& range, int workers = 0) {
  const int p = static_cast<int>(parity);
  parallel_for(0, map.height(), workers, [&](int y) {
    for (int x = (y + p) & 1; x < map.width(); x += 2) propagate_pixel(map, evaluator, x, y, range);
  });
}

struct RefinementParams {
  double depth_interval = 1.0;
  double normal_radius_rad = deg_to_rad(60.0);
};

struct RefinementResult {
  PlaneCell cell;
  int evaluations = 0;
};

/// Six random tests around the current plane, halving the depth interval and
/// normal radius at each test. A candidate replaces the current plane only
/// when it is cheaper.
inline RefinementResult random_refinement(const PatchCostEvaluator& evaluator, const PlaneCell& current,
                                          int x, int y, const DepthRange& range,
                                          const RefinementParams& params, std::minstd_rand& rng) {
  RefinementResult result{current, 0};
  PlaneCell& best = result.cell;
  const Vec3f& ray = evaluator.rays().at(x, y);
  const float lo = static_cast<float>(range.min);
  const float hi = static_cast<float>(range.max);
  float scale = 1.0f;
  for (int i = 0; i < kRefinementTests; ++i, scale *= 0.5f) {
    const float base_depth = best.valid ? best.depth : 0.5f * (lo + hi);
    const Vec3f base_normal = best.valid ? best.normal : Vec3f(-ray);
    const float dd = static_cast<float>(params.depth_interval) * scale;
    const float depth = std::clamp(base_depth + detail::uniform(rng, -dd, dd), lo, hi);
    Vec3f normal = detail::perturb_normal(rng, base_normal, ray,
                                          static_cast<float>(params.normal_radius_rad) * scale);
    if (-sym_dot(normal, ray) <= kMinFacing) normal = base_normal;
    PlaneCell cand = make_cell(ray, depth, normal, 0.0f);
    if (!cand.valid) cand = make_cell(ray, depth, -ray, 0.0f);
    const float c = evaluator.cost(x, y, cand.normal, cand.offset, best.valid ? best.cost : std::numeric_limits<float>::infinity());
    ++result.evaluations;
    if (c < best.cost || !best.valid) {
      cand.cost = c;
      best = cand;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Depth output

/// Per-pixel depth in meters with a validity mask.
struct DepthPanorama {
  EquirectCamera camera;
  Raster<float> depth;
  Raster<std::uint8_t> valid;

  DepthPanorama() = default;
  explicit DepthPanorama(const EquirectCamera& cam)
      : camera(cam), depth(cam.width(), cam.height(), 0.0f), valid(cam.width(), cam.height(), 0) {}

  int width() const { return camera.width(); }
  int height() const { return camera.height(); }

  bool is_valid(int x, int y) const { return valid.at(x, y) != 0; }

  std::optional<float> at(int x, int y) const {
    if (!is_valid(x, y)) return std::nullopt;
    return depth.at(x, y);
  }

  void set(int x, int y, float d) {
    depth.at(x, y) = d;
    valid.at(x, y) = 1;
  }

  void invalidate(int x, int y) {
    depth.at(x, y) = 0.0f;
    valid.at(x, y) = 0;
  }

  int valid_count() const {
    int n = 0;
    for (auto v : valid.values()) n += v ? 1 : 0;
    return n;
  }

  double valid_ratio() const {
    return camera.pixel_count() > 0 ? static_cast<double>(valid_count()) / camera.pixel_count() : 0.0;
  }

  friend bool operator==(const DepthPanorama&, const DepthPanorama&) = default;
};

/// Depth of every valid, well-matched, non-polar cell.
inline DepthPanorama extract_depth(const PlaneMap& map, const PatchMatchOptions& options) {
  DepthPanorama out(map.camera());
  for (int y = 0; y < map.height(); ++y) {
    if (map.camera().is_pole_row(y, options.pole_latitude_deg)) continue;
    for (int x = 0; x < map.width(); ++x) {
      const PlaneCell& c = map.at(x, y);
      if (c.valid && c.cost <= options.max_valid_cost && options.depth_range.contains(c.depth)) {
        out.set(x, y, c.depth);
      }
    }
  }
  return out;
}

struct PatchMatchResult {
  PlaneMap planes;
  DepthPanorama depth;
};

/// Full optimization: initial costs, then `iterations` rounds of red and
/// black half-steps, each pixel propagating and then refining.
inline PatchMatchResult run_patchmatch(const StereoGroup& group, PlaneMap init,
                                       const PatchMatchOptions& options, std::uint64_t seed) {
  options.validate();
  if (!(init.camera() == group.camera)) throw DomainError("initial plane map does not match the stereo group camera");
  const PatchCostEvaluator evaluator(group, options.patch);
  const DepthRange& range = options.depth_range;
  const RefinementParams refine{options.refine_depth_fraction * (range.max - range.min),
                                deg_to_rad(options.refine_normal_deg)};
  PlaneMap& map = init;
  const int w = map.width();

  parallel_for(0, map.height(), options.workers, [&](int y) {
    for (int x = 0; x < w; ++x) {
      PlaneCell& c = map.at(x, y);
      if (c.valid && !range.contains(c.depth)) c.valid = false;
      if (!c.valid) {
        c = make_cell(evaluator.rays().at(x, y), static_cast<float>(range.min), -evaluator.rays().at(x, y), 0.0f);
      }
      c.cost = evaluator.cost(x, y, c);
    }
  });

  for (int it = 0; it < options.iterations; ++it) {
    for (int p = 0; p < 2; ++p) {
      parallel_for(0, map.height(), options.workers, [&](int y) {
        for (int x = (y + p) & 1; x < w; x += 2) {
          propagate_pixel(map, evaluator, x, y, range);
          auto rng = pixel_rng(seed, detail::kStreamRefine, static_cast<std::uint64_t>(2 * it + p), x, y, w);
          map.at(x, y) = random_refinement(evaluator, map.at(x, y), x, y, range, refine, rng).cell;
        }
      });
    }
  }
  DepthPanorama depth = extract_depth(map, options);
  return {std::move(init), std::move(depth)};
}

// ---------------------------------------------------------------------------
// Post filter

/// Invalidates pixels that deviate from the median of their valid
/// neighborhood by more than `rel_threshold` (relative to the median). Kept
/// depths are passed through untouched.
inline DepthPanorama median_outlier_filter(const DepthPanorama& input, int window, double rel_threshold) {
  if (window < 3 || window % 2 == 0) throw ConfigError("median window must be odd and >= 3");
  DepthPanorama out = input;
  const int r = window / 2;
  const int w = input.width();
  const int h = input.height();
  std::vector<float> values;
  values.reserve(static_cast<size_t>(window) * window);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!input.is_valid(x, y)) continue;
      values.clear();
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = wrap_column(x + dx, w);
          if (input.is_valid(xx, yy)) values.push_back(input.depth.at(xx, yy));
        }
      }
      const size_t mid = values.size() / 2;
      std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
      double median = values[mid];
      if (values.size() % 2 == 0) {
        const float lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
      }
      const double d = input.depth.at(x, y);
      if (std::abs(d - median) > rel_threshold * median) out.invalidate(x, y);
    }
  }
  return out;
}

}  // namespace panodense
