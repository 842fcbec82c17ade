#pragma once

#include <cmath>
#include <vector>

#include "core/image.hpp"

namespace flowseed {

// Dense displacement field, frame-1 -> frame-2 convention: the content at
// pixel (x, y) of frame 1 appears at (x + u, y + v) in frame 2.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> uv;  // interleaved u, v; row-major

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h), uv(static_cast<size_t>(w) * h * 2, 0.0) {}

  double& u(int x, int y) { return uv[(static_cast<size_t>(y) * width + x) * 2]; }
  double& v(int x, int y) { return uv[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
  double u(int x, int y) const { return uv[(static_cast<size_t>(y) * width + x) * 2]; }
  double v(int x, int y) const { return uv[(static_cast<size_t>(y) * width + x) * 2 + 1]; }

  Vec2 at(int x, int y) const { return {u(x, y), v(x, y)}; }

  double magnitude(int x, int y) const {
    const double a = u(x, y);
    const double b = v(x, y);
    return std::sqrt(a * a + b * b);
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
};

// Per-pixel embedding vectors, pixel-major: vector for (x, y) starts at
// data[((y * width) + x) * dim].
struct EmbeddingField {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<double> data;

  EmbeddingField() = default;
  EmbeddingField(int w, int h, int d)
      : width(w), height(h), dim(d), data(static_cast<size_t>(w) * h * d, 0.0) {}

  const double* at(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * dim;
  }
  double* at(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * dim;
  }
};

}  // namespace flowseed
