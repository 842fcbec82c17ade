#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace flowseed {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

struct PixelCoord {
  int x = 0;
  int y = 0;
  bool operator==(const PixelCoord&) const = default;
};

// Grayscale image, row-major doubles. Values are nominally in [0, 1] but the
// container itself does not enforce a range (masks store {0, 1}).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), v(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  size_t size() const { return v.size(); }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

  std::uint8_t* px(int x, int y) {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* px(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

enum class Border {
  Zero,   // out-of-bounds taps read 0
  Clamp,  // out-of-bounds taps read the nearest edge pixel
};

double bilinear_sample(const Image& img, double x, double y, Border border);

}  // namespace flowseed
