#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace panodense {

/// Row-major 2D grid.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  size_t index(int x, int y) const { return static_cast<size_t>(y) * width_ + x; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

using GrayImage = Raster<float>;
using ColorImage = Raster<Rgb8>;

inline int wrap_column(int x, int width) {
  x %= width;
  return x < 0 ? x + width : x;
}

/// Bilinear lookup between columns x0 and x0 + 1 (wrapping) at fraction du,
/// with vertical clamping.
inline float sample_bilinear_column(const GrayImage& image, int x0, float du, float v) {
  const int w = image.width();
  const int h = image.height();
  v = std::fmin(std::fmax(v, 0.0f), static_cast<float>(h - 1));
  const float fv = std::floor(v);
  const float dv = v - fv;
  const int x1 = x0 + 1 == w ? 0 : x0 + 1;
  const int y0 = static_cast<int>(fv);
  const int y1 = y0 + 1 < h ? y0 + 1 : y0;
  const float* row0 = image.data() + static_cast<size_t>(y0) * w;
  const float* row1 = image.data() + static_cast<size_t>(y1) * w;
  const float top = row0[x0] + du * (row0[x1] - row0[x0]);
  const float bottom = row1[x0] + du * (row1[x1] - row1[x0]);
  return top + dv * (bottom - top);
}

/// Bilinear lookup with horizontal wraparound and vertical clamping; pixel
/// values sit at integer coordinates.
inline float sample_bilinear_wrapped(const GrayImage& image, float u, float v) {
  const float fu = std::floor(u);
  return sample_bilinear_column(image, wrap_column(static_cast<int>(fu), image.width()), u - fu, v);
}

inline float luminance(const Rgb8& c) {
  return (0.299f * c.r + 0.587f * c.g + 0.114f * c.b) / 255.0f;
}

inline GrayImage to_gray(const ColorImage& image) {
  GrayImage gray(image.width(), image.height());
  for (size_t i = 0; i < image.size(); ++i) gray[i] = luminance(image[i]);
  return gray;
}

/// Rolls every row right by `shift` columns (wrapping).
template <typename T>
Raster<T> roll_columns(const Raster<T>& image, int shift) {
  Raster<T> out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(wrap_column(x + shift, image.width()), y) = image.at(x, y);
    }
  }
  return out;
}

}  // namespace panodense
