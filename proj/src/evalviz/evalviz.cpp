#include "evalviz/evalviz.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/rng.hpp"

namespace flowseed::evalviz {

double dice_score(const Image& pred, const Image& target, double threshold) {
  if (pred.width != target.width || pred.height != target.height)
    throw std::invalid_argument("dice_score: extents differ");
  size_t a = 0, b = 0, inter = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool pa = pred.v[i] >= threshold;
    const bool pb = target.v[i] >= threshold;
    a += pa;
    b += pb;
    inter += pa && pb;
  }
  if (a + b == 0) return 1.0;  // agreement on emptiness
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

ProjectionBasis ProjectionBasis::create(int dim, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("ProjectionBasis: dim must be positive");
  ProjectionBasis basis;
  basis.dim = dim;
  basis.seed = seed;
  basis.m.resize(static_cast<size_t>(dim) * 3);
  Rng rng(seed);
  for (double& v : basis.m) v = rng.normal();
  return basis;
}

RgbImage random_projection(const EmbeddingField& emb, const ProjectionBasis& basis) {
  if (basis.dim != emb.dim)
    throw std::invalid_argument("random_projection: basis dim does not match field");
  const size_t n = static_cast<size_t>(emb.width) * emb.height;
  std::vector<double> proj(n * 3);
  double lo[3] = {1e300, 1e300, 1e300};
  double hi[3] = {-1e300, -1e300, -1e300};
  for (int y = 0; y < emb.height; ++y) {
    for (int x = 0; x < emb.width; ++x) {
      const double* e = emb.at(x, y);
      double* p = proj.data() + (static_cast<size_t>(y) * emb.width + x) * 3;
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int d = 0; d < emb.dim; ++d) acc += e[d] * basis.m[d * 3 + c];
        p[c] = acc;
        lo[c] = std::min(lo[c], acc);
        hi[c] = std::max(hi[c], acc);
      }
    }
  }
  RgbImage out(emb.width, emb.height);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double range = hi[c] - lo[c];
      out.rgb[i * 3 + c] =
          range <= 0.0 ? 128
                       : static_cast<std::uint8_t>(std::lround(
                             255.0 * (proj[i * 3 + c] - lo[c]) / range));
    }
  }
  return out;
}

namespace {

void check_anchor(int x, int y, int w, int h) {
  if (x < 0 || y < 0 || x >= w || y >= h)
    throw std::invalid_argument("anchor_similarity_map: anchor out of bounds");
}

void check_offset(int dx, int dy, int w, int h) {
  if (std::abs(dx) >= w || std::abs(dy) >= h)
    throw std::invalid_argument("shifted_similarity_map: offset exceeds extents");
}

}  // namespace

SimilarityMap anchor_similarity_map(const EmbeddingField& field, PixelCoord anchor,
                                    const flowloss::KernelConfig&) {
  check_anchor(anchor.x, anchor.y, field.width, field.height);
  SimilarityMap map;
  map.kind = SimilarityMap::Kind::Anchor;
  map.width = field.width;
  map.height = field.height;
  map.anchor = anchor;
  map.value.resize(static_cast<size_t>(field.width) * field.height);
  map.valid.assign(map.value.size(), 1);
  const std::span<const double> a{field.at(anchor.x, anchor.y),
                                  static_cast<size_t>(field.dim)};
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      map.value[static_cast<size_t>(y) * field.width + x] =
          flowloss::embedding_similarity(
              {field.at(x, y), static_cast<size_t>(field.dim)}, a);
    }
  }
  return map;
}

SimilarityMap anchor_similarity_map(const FlowField& field, PixelCoord anchor,
                                    const flowloss::KernelConfig& cfg) {
  check_anchor(anchor.x, anchor.y, field.width, field.height);
  SimilarityMap map;
  map.kind = SimilarityMap::Kind::Anchor;
  map.width = field.width;
  map.height = field.height;
  map.anchor = anchor;
  map.value.resize(static_cast<size_t>(field.width) * field.height);
  map.valid.assign(map.value.size(), 1);
  const Vec2 f_anchor = field.at(anchor.x, anchor.y);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      map.value[static_cast<size_t>(y) * field.width + x] =
          flowloss::flow_similarity(f_anchor, field.at(x, y), cfg);
    }
  }
  return map;
}

SimilarityMap shifted_similarity_map(const EmbeddingField& field, int dx, int dy,
                                     const flowloss::KernelConfig&) {
  check_offset(dx, dy, field.width, field.height);
  SimilarityMap map;
  map.kind = SimilarityMap::Kind::Shifted;
  map.width = field.width;
  map.height = field.height;
  map.dx = dx;
  map.dy = dy;
  map.value.assign(static_cast<size_t>(field.width) * field.height, 0.0);
  map.valid.assign(map.value.size(), 0);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const int qx = x + dx, qy = y + dy;
      if (qx < 0 || qy < 0 || qx >= field.width || qy >= field.height) continue;
      const size_t i = static_cast<size_t>(y) * field.width + x;
      map.value[i] = flowloss::embedding_similarity(
          {field.at(x, y), static_cast<size_t>(field.dim)},
          {field.at(qx, qy), static_cast<size_t>(field.dim)});
      map.valid[i] = 1;
    }
  }
  return map;
}

SimilarityMap shifted_similarity_map(const FlowField& field, int dx, int dy,
                                     const flowloss::KernelConfig& cfg) {
  check_offset(dx, dy, field.width, field.height);
  SimilarityMap map;
  map.kind = SimilarityMap::Kind::Shifted;
  map.width = field.width;
  map.height = field.height;
  map.dx = dx;
  map.dy = dy;
  map.value.assign(static_cast<size_t>(field.width) * field.height, 0.0);
  map.valid.assign(map.value.size(), 0);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const int qx = x + dx, qy = y + dy;
      if (qx < 0 || qy < 0 || qx >= field.width || qy >= field.height) continue;
      const size_t i = static_cast<size_t>(y) * field.width + x;
      map.value[i] = flowloss::flow_similarity(field.at(x, y), field.at(qx, qy), cfg);
      map.valid[i] = 1;
    }
  }
  return map;
}

Image similarity_to_image(const SimilarityMap& map, bool embedding_range) {
  Image out(map.width, map.height);
  for (size_t i = 0; i < map.value.size(); ++i) {
    if (!map.valid[i]) {
      out.v[i] = 128.0 / 255.0;
      continue;
    }
    const double v = map.value[i];
    out.v[i] = std::clamp(embedding_range ? (v + 1.0) / 2.0 : v, 0.0, 1.0);
  }
  return out;
}

WarpResult warp_and_occlude(const Image& frame2, const FlowField& forward,
                            const FlowField& backward, double tol) {
  if (frame2.width != forward.width || frame2.height != forward.height ||
      backward.width != forward.width || backward.height != forward.height)
    throw std::invalid_argument("warp_and_occlude: extents differ");

  auto sample_flow = [](const FlowField& f, double x, double y) -> Vec2 {
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, f.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, f.height - 1);
    const int x1 = std::min(x0 + 1, f.width - 1);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double ax = std::clamp(x - x0, 0.0, 1.0);
    const double ay = std::clamp(y - y0, 0.0, 1.0);
    auto lerp2 = [&](double v00, double v10, double v01, double v11) {
      const double top = v00 + ax * (v10 - v00);
      const double bot = v01 + ax * (v11 - v01);
      return top + ay * (bot - top);
    };
    return {lerp2(f.u(x0, y0), f.u(x1, y0), f.u(x0, y1), f.u(x1, y1)),
            lerp2(f.v(x0, y0), f.v(x1, y0), f.v(x0, y1), f.v(x1, y1))};
  };

  WarpResult result;
  result.warped = Image(frame2.width, frame2.height);
  result.occlusion = Image(frame2.width, frame2.height);
  for (int y = 0; y < frame2.height; ++y) {
    for (int x = 0; x < frame2.width; ++x) {
      const Vec2 f = forward.at(x, y);
      const double lx = x + f.x;
      const double ly = y + f.y;
      bool occluded;
      if (lx < 0.0 || ly < 0.0 || lx > frame2.width - 1.0 || ly > frame2.height - 1.0) {
        occluded = true;
      } else {
        const Vec2 b = sample_flow(backward, lx, ly);
        occluded = std::hypot(f.x + b.x, f.y + b.y) > tol;
      }
      result.occlusion.at(x, y) = occluded ? 1.0 : 0.0;
      result.warped.at(x, y) =
          occluded ? 0.0 : bilinear_sample(frame2, lx, ly, Border::Clamp);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// flow color wheel (Middlebury convention)

namespace {

struct ColorWheel {
  int ncols = 0;
  int cols[55][3];

  ColorWheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    int k = 0;
    auto set = [&](int r, int g, int b) {
      cols[k][0] = r;
      cols[k][1] = g;
      cols[k][2] = b;
      ++k;
    };
    for (int i = 0; i < RY; ++i) set(255, 255 * i / RY, 0);
    for (int i = 0; i < YG; ++i) set(255 - 255 * i / YG, 255, 0);
    for (int i = 0; i < GC; ++i) set(0, 255, 255 * i / GC);
    for (int i = 0; i < CB; ++i) set(0, 255 - 255 * i / CB, 255);
    for (int i = 0; i < BM; ++i) set(255 * i / BM, 0, 255);
    for (int i = 0; i < MR; ++i) set(255, 0, 255 - 255 * i / MR);
    ncols = k;
  }
};

const ColorWheel& wheel() {
  static const ColorWheel w;
  return w;
}

// fx, fy normalized so |.| <= 1 covers the wheel. White at zero motion.
void compute_color(double fx, double fy, std::uint8_t* pix) {
  const ColorWheel& w = wheel();
  const double rad = std::sqrt(fx * fx + fy * fy);
  const double a = std::atan2(-fy, -fx) / 3.141592653589793;
  const double fk = (a + 1.0) / 2.0 * (w.ncols - 1);
  const int k0 = static_cast<int>(fk);
  const int k1 = (k0 + 1) % w.ncols;
  const double f = fk - k0;
  for (int b = 0; b < 3; ++b) {
    const double col0 = w.cols[k0][b] / 255.0;
    const double col1 = w.cols[k1][b] / 255.0;
    double col = (1.0 - f) * col0 + f * col1;
    if (rad <= 1.0) {
      col = 1.0 - rad * (1.0 - col);  // saturation grows with radius
    } else {
      col *= 0.75;  // past the normalization percentile
    }
    pix[b] = static_cast<std::uint8_t>(std::lround(255.0 * col));
  }
}

}  // namespace

RgbImage flow_color_encode(const FlowField& flow) {
  std::vector<double> mags;
  mags.reserve(static_cast<size_t>(flow.width) * flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) mags.push_back(flow.magnitude(x, y));
  }
  const size_t idx = static_cast<size_t>(0.99 * (mags.size() - 1));
  std::nth_element(mags.begin(), mags.begin() + idx, mags.end());
  double maxrad = mags[idx];
  if (maxrad <= 1e-12) maxrad = 1.0;  // all-zero flow renders white

  RgbImage out(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      compute_color(flow.u(x, y) / maxrad, flow.v(x, y) / maxrad, out.px(x, y));
    }
  }
  return out;
}

}  // namespace flowseed::evalviz
