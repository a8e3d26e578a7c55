#pragma once

// Dataset directory: a dataset.json manifest plus equirectangular PNG images
// and optional ground-truth depth PNGs. See docs/dataset-format.md.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "panodense/depth_io.hpp"
#include "panodense/errors.hpp"
#include "panodense/keyframe.hpp"
#include "panodense/raster.hpp"
#include "panodense/sphere_geometry.hpp"

namespace panodense {

inline constexpr const char* kDatasetFormat = "panodense-dataset";
inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kManifestName = "dataset.json";

struct KeyframeRecord {
  std::int64_t id = 0;
  std::string image;
  RigidPose pose;
  std::vector<Vec3> sparse_points;
  std::vector<std::int64_t> sparse_ids;
  /// Relative path of a ground-truth depth PNG, if present.
  std::string depth_gt;
};

struct Dataset {
  std::filesystem::path root;
  EquirectCamera camera;
  std::vector<KeyframeRecord> keyframes;

  std::filesystem::path manifest_path() const { return root / kManifestName; }
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void manifest_error(const std::filesystem::path& file, const std::string& key,
                                        const std::string& what) {
  throw IoError(file.string() + ": " + key + ": " + what);
}

inline const json& require(const json& obj, const char* key, const std::filesystem::path& file,
                           const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) manifest_error(file, where + key, "missing");
  return obj.at(key);
}

inline double number_at(const json& v, const std::filesystem::path& file, const std::string& key) {
  if (!v.is_number()) manifest_error(file, key, "expected a number");
  return v.get<double>();
}

inline std::vector<double> numbers(const json& v, std::size_t n, const std::filesystem::path& file,
                                   const std::string& key) {
  if (!v.is_array() || v.size() != n) {
    manifest_error(file, key, "expected an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(number_at(v[i], file, key + "[" + std::to_string(i) + "]"));
  return out;
}

inline KeyframeRecord parse_keyframe(const json& k, std::size_t index, const std::filesystem::path& file) {
  const std::string where = "keyframes[" + std::to_string(index) + "].";
  KeyframeRecord r;
  const json& id = require(k, "id", file, where);
  if (!id.is_number_integer()) manifest_error(file, where + "id", "expected an integer");
  r.id = id.get<std::int64_t>();
  const json& image = require(k, "image", file, where);
  if (!image.is_string()) manifest_error(file, where + "image", "expected a file name");
  r.image = image.get<std::string>();
  const auto rot = numbers(require(k, "rotation", file, where), 9, file, where + "rotation");
  const auto tr = numbers(require(k, "translation", file, where), 3, file, where + "translation");
  for (int i = 0; i < 9; ++i) r.pose.rotation(i / 3, i % 3) = rot[static_cast<std::size_t>(i)];
  r.pose.translation = Vec3(tr[0], tr[1], tr[2]);
  if (!r.pose.is_valid(1e-9)) {
    manifest_error(file, where + "rotation", "not orthonormal with determinant +1 (tolerance 1e-9)");
  }
  const json& pts = require(k, "sparse_points", file, where);
  if (!pts.is_array()) manifest_error(file, where + "sparse_points", "expected an array of [x, y, z]");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto p = numbers(pts[i], 3, file, where + "sparse_points[" + std::to_string(i) + "]");
    r.sparse_points.emplace_back(p[0], p[1], p[2]);
  }
  if (k.contains("sparse_point_ids")) {
    const json& ids = k.at("sparse_point_ids");
    if (!ids.is_array() || ids.size() != pts.size()) {
      manifest_error(file, where + "sparse_point_ids", "expected one integer per sparse point");
    }
    for (const auto& v : ids) {
      if (!v.is_number_integer()) manifest_error(file, where + "sparse_point_ids", "expected integers");
      r.sparse_ids.push_back(v.get<std::int64_t>());
    }
  }
  if (k.contains("depth_gt")) {
    if (!k.at("depth_gt").is_string()) manifest_error(file, where + "depth_gt", "expected a file name");
    r.depth_gt = k.at("depth_gt").get<std::string>();
  }
  return r;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& root) {
  using nlohmann::json;
  const auto file = root / kManifestName;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open dataset manifest " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(file.string() + ": invalid JSON: " + e.what());
  }
  const json& format = detail::require(doc, "format", file, "");
  if (format != kDatasetFormat) detail::manifest_error(file, "format", std::string("expected \"") + kDatasetFormat + "\"");
  const json& version = detail::require(doc, "version", file, "");
  if (version != kDatasetVersion) detail::manifest_error(file, "version", "unsupported version");
  const json& cam = detail::require(doc, "camera", file, "");
  const json& w = detail::require(cam, "width", file, "camera.");
  const json& h = detail::require(cam, "height", file, "camera.");
  if (!w.is_number_integer() || !h.is_number_integer()) {
    detail::manifest_error(file, "camera", "width and height must be integers");
  }
  Dataset ds;
  ds.root = root;
  try {
    ds.camera = EquirectCamera(w.get<int>(), h.get<int>());
  } catch (const DomainError& e) {
    detail::manifest_error(file, "camera", e.what());
  }
  const json& kfs = detail::require(doc, "keyframes", file, "");
  if (!kfs.is_array()) detail::manifest_error(file, "keyframes", "expected an array");
  for (std::size_t i = 0; i < kfs.size(); ++i) {
    ds.keyframes.push_back(detail::parse_keyframe(kfs[i], i, file));
    if (i > 0 && ds.keyframes[i].id <= ds.keyframes[i - 1].id) {
      detail::manifest_error(file, "keyframes[" + std::to_string(i) + "].id", "ids must be strictly increasing");
    }
  }
  return ds;
}

inline void save_manifest(const Dataset& ds) {
  using nlohmann::json;
  json kfs = json::array();
  for (const auto& k : ds.keyframes) {
    json rot = json::array();
    for (int i = 0; i < 9; ++i) rot.push_back(k.pose.rotation(i / 3, i % 3));
    json pts = json::array();
    for (const auto& p : k.sparse_points) pts.push_back({p.x(), p.y(), p.z()});
    json entry = {{"id", k.id},
                  {"image", k.image},
                  {"rotation", rot},
                  {"translation", {k.pose.translation.x(), k.pose.translation.y(), k.pose.translation.z()}},
                  {"sparse_points", pts}};
    if (!k.sparse_ids.empty()) entry["sparse_point_ids"] = k.sparse_ids;
    if (!k.depth_gt.empty()) entry["depth_gt"] = k.depth_gt;
    kfs.push_back(std::move(entry));
  }
  json doc = {{"format", kDatasetFormat},
              {"version", kDatasetVersion},
              {"camera", {{"width", ds.camera.width()}, {"height", ds.camera.height()}}},
              {"keyframes", kfs}};
  std::filesystem::create_directories(ds.root);
  std::ofstream out(ds.manifest_path());
  if (!out) throw IoError("cannot write " + ds.manifest_path().string());
  out << doc.dump(1) << "\n";
}

inline ColorImage from_mat(const cv::Mat& bgr) {
  ColorImage out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) out.at(x, y) = {row[x][2], row[x][1], row[x][0]};
  }
  return out;
}

inline cv::Mat to_mat(const ColorImage& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const Rgb8 c = image.at(x, y);
      row[x] = {c.b, c.g, c.r};
    }
  }
  return bgr;
}

inline void write_color_png(const std::filesystem::path& path, const ColorImage& image) {
  if (!cv::imwrite(path.string(), to_mat(image))) throw IoError("cannot write image " + path.string());
}

/// Loads a keyframe image and resizes it to `target` when it differs from
/// the file resolution.
inline ColorImage load_color_image(const std::filesystem::path& path, const EquirectCamera& expected,
                                   const EquirectCamera& target) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  if (bgr.cols != expected.width() || bgr.rows != expected.height()) {
    throw IoError(path.string() + ": image is " + std::to_string(bgr.cols) + "x" + std::to_string(bgr.rows) +
                  " but the manifest camera is " + std::to_string(expected.width()) + "x" +
                  std::to_string(expected.height()));
  }
  if (target == expected) return from_mat(bgr);
  cv::Mat resized;
  const bool shrinking = target.width() < expected.width();
  cv::resize(bgr, resized, cv::Size(target.width(), target.height()), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_mat(resized);
}

inline Keyframe load_keyframe(const Dataset& ds, const KeyframeRecord& record, const EquirectCamera& target) {
  Keyframe k;
  k.id = record.id;
  k.image = std::make_shared<const ColorImage>(load_color_image(ds.root / record.image, ds.camera, target));
  k.pose = record.pose;
  k.sparse_points = record.sparse_points;
  k.sparse_ids = record.sparse_ids;
  return k;
}

inline std::optional<DepthPanorama> load_ground_truth(const Dataset& ds, const KeyframeRecord& record) {
  if (record.depth_gt.empty()) return std::nullopt;
  return read_depth_png(ds.root / record.depth_gt);
}

}  // namespace panodense
