#pragma once

// Equirectangular camera model and the rigid/plane geometry shared by every
// stage of the densifier.
//
// Axis convention (camera frame): x right, y down, z forward. Longitude runs
// from -pi at the left image border to +pi at the right border, latitude is
// positive towards the top row (the -y direction).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "panodense/errors.hpp"

namespace panodense {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec3f = Eigen::Vector3f;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Full-sphere equirectangular camera. Width must be twice the height.
class EquirectCamera {
 public:
  EquirectCamera() = default;
  EquirectCamera(int width, int height) : width_(width), height_(height) {
    if (height <= 0 || width != 2 * height) {
      throw DomainError("equirectangular camera needs height > 0 and width = 2*height, got " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int pixel_count() const { return width_ * height_; }

  /// Latitude in radians of the center of row `y`.
  double row_latitude(int y) const { return kPi / 2 - kPi * (y + 0.5) / height_; }

  /// Rows whose center lies beyond +-limit_deg latitude. Longitude is poorly
  /// conditioned there and patch footprints degenerate.
  bool is_pole_row(int y, double limit_deg) const {
    return std::abs(row_latitude(y)) > deg_to_rad(limit_deg);
  }

  friend bool operator==(const EquirectCamera&, const EquirectCamera&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
};

/// Unit viewing direction of a continuous pixel coordinate. Integer
/// coordinates address pixel centers.
inline Vec3 pixel_to_ray(const EquirectCamera& camera, const Vec2& pixel) {
  if (!(pixel.x() >= 0.0 && pixel.x() < camera.width() && pixel.y() >= 0.0 &&
        pixel.y() < camera.height())) {
    throw DomainError("pixel (" + std::to_string(pixel.x()) + ", " + std::to_string(pixel.y()) +
                      ") outside the equirectangular image");
  }
  const double lon = 2.0 * kPi * (pixel.x() + 0.5) / camera.width() - kPi;
  const double lat = kPi / 2 - kPi * (pixel.y() + 0.5) / camera.height();
  const double cos_lat = std::cos(lat);
  return {cos_lat * std::sin(lon), -std::sin(lat), cos_lat * std::cos(lon)};
}

/// Inverse of pixel_to_ray. x is wrapped into [0, width); y is clamped to the
/// image so the north pole lands on row 0.
inline Vec2 ray_to_pixel(const EquirectCamera& camera, const Vec3& direction) {
  const double norm = direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DomainError("cannot project a zero-length direction");
  }
  double lon = std::atan2(direction.x(), direction.z());
  if (lon >= kPi) lon -= 2.0 * kPi;
  const double lat = std::atan2(-direction.y(), std::hypot(direction.x(), direction.z()));
  double x = (lon + kPi) * camera.width() / (2.0 * kPi) - 0.5;
  if (x < 0.0) x += camera.width();
  if (x >= camera.width()) x -= camera.width();
  double y = (kPi / 2 - lat) * camera.height() / kPi - 0.5;
  y = std::clamp(y, 0.0, std::nextafter(static_cast<double>(camera.height()), 0.0));
  return {x, y};
}

/// World-from-camera rigid transform. `translation` is the camera center in
/// world coordinates.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& point) const { return rotation * point + translation; }
  Vec3 apply_rotation(const Vec3& direction) const { return rotation * direction; }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// this ∘ other
  RigidPose compose(const RigidPose& other) const {
    RigidPose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  void validate(double tol = 1e-9) const {
    if (!is_valid(tol)) throw DomainError("pose rotation is not orthonormal with determinant +1");
  }

  friend bool operator==(const RigidPose& a, const RigidPose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

/// Maps a point expressed in the `src` camera frame into the `dst` camera frame.
inline Vec3 transform_point(const RigidPose& src, const RigidPose& dst, const Vec3& point) {
  return dst.rotation.transpose() * (src.apply(point) - dst.translation);
}

/// Rotation of angle `radians` about the camera y axis, turning +z towards +x.
inline Mat3 rotation_about_y(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix();
}

/// Exact quarter turn about y mapping (x, y, z) to (z, y, -x). Applied to a
/// camera frame it shifts longitudes by +90 degrees.
inline Mat3 quarter_turn_y() {
  Mat3 m;
  m << 0, 0, 1,
       0, 1, 0,
      -1, 0, 0;
  return m;
}

/// Local surface model at a pixel: distance along the pixel's viewing ray and
/// a unit normal in the camera frame.
struct PlaneHypothesis {
  double depth = 0.0;
  Vec3 normal = -Vec3::UnitZ();

  bool faces(const Vec3& ray) const { return normal.dot(ray) < 0.0; }
};

/// Distance along `query_ray` to the plane through depth*anchor_ray with the
/// hypothesis normal. Empty when the ray is (near) parallel to the plane or
/// the intersection lies behind the camera.
inline std::optional<double> plane_depth_along_ray(const PlaneHypothesis& hypothesis,
                                                   const Vec3& anchor_ray,
                                                   const Vec3& query_ray) {
  const double denom = hypothesis.normal.dot(query_ray);
  if (std::abs(denom) <= 1e-9) return std::nullopt;
  const double lambda = hypothesis.depth * hypothesis.normal.dot(anchor_ray) / denom;
  if (!(lambda > 0.0) || !std::isfinite(lambda)) return std::nullopt;
  return lambda;
}

/// Per-pixel unit rays of an equirectangular camera in single precision.
///
/// When the width is divisible by four, columns in later quarters are exact
/// quarter-turn copies of the first quarter, so the table (and everything
/// computed from it) is equivariant under 90 degree longitude rolls.
class BearingTable {
 public:
  BearingTable() = default;
  explicit BearingTable(const EquirectCamera& camera)
      : width_(camera.width()), height_(camera.height()), rays_(camera.pixel_count()) {
    const int quarter = width_ % 4 == 0 ? width_ / 4 : width_;
    for (int y = 0; y < height_; ++y) {
      const double lat = camera.row_latitude(y);
      const double cos_lat = std::cos(lat);
      const double sin_lat = std::sin(lat);
      for (int r = 0; r < quarter; ++r) {
        const double lon = 2.0 * kPi * (r + 0.5) / width_ - kPi;
        Vec3f ray(static_cast<float>(cos_lat * std::sin(lon)), static_cast<float>(-sin_lat),
                  static_cast<float>(cos_lat * std::cos(lon)));
        for (int x = r; x < width_; x += quarter) {
          rays_[static_cast<size_t>(y) * width_ + x] = ray;
          ray = Vec3f(ray.z(), ray.y(), -ray.x());
        }
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const Vec3f& at(int x, int y) const { return rays_[static_cast<size_t>(y) * width_ + x]; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Vec3f> rays_;
};

// Single-precision helpers that pair the x and z terms before adding y. A
// quarter turn about y swaps x and z, so results computed this way rotate
// bit-exactly with the input.

inline float sym_dot(const Vec3f& a, const Vec3f& b) {
  return (a.x() * b.x() + a.z() * b.z()) + a.y() * b.y();
}

inline float sym_norm(const Vec3f& a) { return std::sqrt(sym_dot(a, a)); }

inline Vec3f sym_normalized(const Vec3f& a) { return a / sym_norm(a); }

inline Vec3f sym_cross(const Vec3f& a, const Vec3f& b) {
  return {a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(), a.x() * b.y() - a.y() * b.x()};
}

/// m * v with rows evaluated by sym_dot.
inline Vec3f sym_mul(const Eigen::Matrix3f& m, const Vec3f& v) {
  return {sym_dot(m.row(0).transpose(), v), sym_dot(m.row(1).transpose(), v), sym_dot(m.row(2).transpose(), v)};
}

/// Tangent basis (east, north) at a viewing ray. Built only from the ray
/// components so that it rotates exactly with quarter-turn rolls.
inline void tangent_basis(const Vec3f& ray, Vec3f& east, Vec3f& north) {
  const float h = std::sqrt(ray.x() * ray.x() + ray.z() * ray.z());
  if (h > 1e-12f) {
    east = Vec3f(ray.z() / h, 0.0f, -ray.x() / h);
  } else {
    east = Vec3f(1.0f, 0.0f, 0.0f);
  }
  north = sym_cross(ray, east);
}

/// Arctangent on [-1, 1]; absolute error below 1e-5 rad.
inline float atan_unit(float t) {
  const float t2 = t * t;
  return t * (0.99997726f +
              t2 * (-0.33262347f + t2 * (0.19354346f + t2 * (-0.11643287f + t2 * (0.05265332f + t2 * -0.01172120f)))));
}

/// Continuous equirectangular coordinates of a direction, split into the
/// fractional column inside a canonical quarter and a whole-quarter column
/// offset. A quarter-turn rotated direction yields the identical local column
/// and an offset larger by width/4.
struct QuarterProjection {
  float local_u;   ///< column, before adding `quarter_index * width / 4`
  int quarter_index;
  float v;
};

inline QuarterProjection project_quartered(const Vec3f& q, int width, int height) {
  // Rotate (x, z) back by k quarter turns so that it lies in the sector
  // -z < x <= z, which is the longitude interval (-pi/4, pi/4]. Written with
  // selects only so the caller's loops vectorize.
  const float x = q.x();
  const float z = q.z();
  const bool s0 = (z > 0.0f) & (x > -z) & (x <= z);
  const bool s1 = (x > 0.0f) & (z < x) & (-z <= x);
  const bool s2 = (z < 0.0f) & (-x > z) & (-x <= -z);
  const int k = s0 ? 0 : s1 ? 1 : s2 ? 2 : 3;
  const float xs = s0 ? x : s1 ? -z : s2 ? -x : z;
  const float zs = s0 ? z : s1 ? x : s2 ? -z : -x;
  const float a = atan_unit(xs / (zs > 1e-30f ? zs : 1e-30f));
  const float cols_per_rad = static_cast<float>(width / (2.0 * kPi));
  const int quarter = width / 4;
  QuarterProjection out;
  out.local_u = a * cols_per_rad + (static_cast<float>(2 * quarter) - 0.5f);
  out.quarter_index = k;
  const float h = std::sqrt(x * x + z * z);
  const float up = -q.y();
  const float half_pi = static_cast<float>(kPi / 2);
  const bool flat = std::abs(up) <= h;
  const float num = flat ? up : h;
  const float den = flat ? h : up;
  const float t = num / (std::abs(den) > 1e-30f ? den : 1e-30f);
  const float at = atan_unit(t);
  const float lat = flat ? at : (up > 0.0f ? half_pi - at : -half_pi - at);
  out.v = (half_pi - lat) * static_cast<float>(height / kPi) - 0.5f;
  return out;
}

}  // namespace panodense
