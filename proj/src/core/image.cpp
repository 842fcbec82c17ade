#include "core/image.hpp"

#include <algorithm>
#include <cmath>

namespace flowseed {

namespace {

inline double tap(const Image& img, int x, int y, Border border) {
  if (img.in_bounds(x, y)) return img.at(x, y);
  if (border == Border::Zero) return 0.0;
  x = std::clamp(x, 0, img.width - 1);
  y = std::clamp(y, 0, img.height - 1);
  return img.at(x, y);
}

}  // namespace

double bilinear_sample(const Image& img, double x, double y, Border border) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double v00 = tap(img, x0, y0, border);
  const double v10 = tap(img, x0 + 1, y0, border);
  const double v01 = tap(img, x0, y0 + 1, border);
  const double v11 = tap(img, x0 + 1, y0 + 1, border);
  const double top = v00 + ax * (v10 - v00);
  const double bot = v01 + ax * (v11 - v01);
  return top + ay * (bot - top);
}

}  // namespace flowseed
