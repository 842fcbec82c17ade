#pragma once

#include <cstdint>
#include <vector>

#include "core/flow_field.hpp"
#include "core/image.hpp"
#include "flowloss/flowloss.hpp"

namespace flowseed::evalviz {

// 2|A n B| / (|A| + |B|) with A = pred >= threshold, B = target >= threshold.
// Both empty counts as perfect agreement (1.0).
double dice_score(const Image& pred, const Image& target, double threshold = 0.5);

// Fixed random dim x 3 matrix; reused across all images of a report so
// colors stay comparable.
struct ProjectionBasis {
  int dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> m;  // row-major dim x 3

  static ProjectionBasis create(int dim, std::uint64_t seed);
};

// Per-pixel projection to 3 channels, then per-channel min-max normalization
// to [0, 255]. A constant channel maps to 128.
RgbImage random_projection(const EmbeddingField& emb, const ProjectionBasis& basis);

struct SimilarityMap {
  enum class Kind { Anchor, Shifted };
  Kind kind = Kind::Anchor;
  int width = 0, height = 0;
  PixelCoord anchor;         // Anchor maps
  int dx = 0, dy = 0;        // Shifted maps
  std::vector<double> value;
  std::vector<std::uint8_t> valid;  // shifted maps: both endpoints in bounds

  double at(int x, int y) const { return value[static_cast<size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const {
    return valid[static_cast<size_t>(y) * width + x] != 0;
  }
};

// Similarity of every pixel against one anchor pixel: cosine kernel for
// embeddings, RBF flow kernel for flow (the anchor is the kernel's anchor
// argument).
SimilarityMap anchor_similarity_map(const EmbeddingField& field, PixelCoord anchor,
                                    const flowloss::KernelConfig& cfg);
SimilarityMap anchor_similarity_map(const FlowField& field, PixelCoord anchor,
                                    const flowloss::KernelConfig& cfg);

// Similarity between (x, y) and (x+dx, y+dy), defined where both are in
// bounds; other pixels are flagged invalid.
SimilarityMap shifted_similarity_map(const EmbeddingField& field, int dx, int dy,
                                     const flowloss::KernelConfig& cfg);
SimilarityMap shifted_similarity_map(const FlowField& field, int dx, int dy,
                                     const flowloss::KernelConfig& cfg);

// Renders a similarity map to grayscale; embedding maps span [-1, 1], flow
// maps (0, 1]. Invalid pixels render mid-gray.
Image similarity_to_image(const SimilarityMap& map, bool embedding_range);

struct WarpResult {
  Image warped;     // occluded pixels rendered dark
  Image occlusion;  // {0, 1}
};

// warped(x) = bilinear sample of frame2 at x + forward(x); a pixel is
// occluded when the forward/backward round trip misses by more than tol
// pixels (or leaves the frame).
WarpResult warp_and_occlude(const Image& frame2, const FlowField& forward,
                            const FlowField& backward, double tol);

// Optical-flow color wheel: hue from direction, white at zero motion,
// saturation growing with magnitude normalized by the 99th percentile.
RgbImage flow_color_encode(const FlowField& flow);

}  // namespace flowseed::evalviz
