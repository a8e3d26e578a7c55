#pragma once

// 16-bit PNG depth maps in millimeters with a JSON sidecar. Zero marks an
// invalid pixel.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "panodense/errors.hpp"
#include "panodense/patchmatch.hpp"

namespace panodense {

/// Meters per stored unit.
inline constexpr double kDepthPngScale = 0.001;

inline void write_depth_png(const std::filesystem::path& png_path, const DepthPanorama& depth) {
  cv::Mat image(depth.height(), depth.width(), CV_16UC1, cv::Scalar(0));
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  int clipped = 0;
  for (int y = 0; y < depth.height(); ++y) {
    auto* row = image.ptr<std::uint16_t>(y);
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double d = depth.depth.at(x, y);
      const long units = std::lround(d / kDepthPngScale);
      if (units > 65535) ++clipped;
      row[x] = static_cast<std::uint16_t>(std::clamp(units, 1L, 65535L));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  if (!cv::imwrite(png_path.string(), image)) throw IoError("cannot write depth image " + png_path.string());

  const int valid = depth.valid_count();
  nlohmann::json sidecar = {
      {"width", depth.width()},
      {"height", depth.height()},
      {"unit", "millimeter"},
      {"scale", kDepthPngScale},
      {"invalid_value", 0},
      {"valid_count", valid},
      {"clipped_count", clipped},
      {"min_depth", valid > 0 ? lo : 0.0},
      {"max_depth", valid > 0 ? hi : 0.0},
  };
  std::filesystem::path json_path = png_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << sidecar.dump(2) << "\n";
}

inline DepthPanorama read_depth_png(const std::filesystem::path& png_path) {
  const cv::Mat image = cv::imread(png_path.string(), cv::IMREAD_UNCHANGED);
  if (image.empty()) throw IoError("cannot read depth image " + png_path.string());
  if (image.type() != CV_16UC1) throw IoError(png_path.string() + ": expected a single-channel 16-bit PNG");
  DepthPanorama depth(EquirectCamera(image.cols, image.rows));
  for (int y = 0; y < image.rows; ++y) {
    const auto* row = image.ptr<std::uint16_t>(y);
    for (int x = 0; x < image.cols; ++x) {
      if (row[x] != 0) depth.set(x, y, static_cast<float>(row[x] * kDepthPngScale));
    }
  }
  return depth;
}

}  // namespace panodense
