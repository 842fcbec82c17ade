#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autograd/tensor.hpp"
#include "core/flow_field.hpp"
#include "core/image.hpp"

namespace flowseed::flowloss {

struct KernelConfig {
  double sigma = 0.5;        // RBF width of the flow kernel
  double eps_flow = 1.0;     // magnitude-normalization floor of the flow kernel
  double cos_floor = 1e-4;   // lower clamp applied to cosine similarities
  int neighborhood_radius = 2;   // 2 -> 5x5 window, 24 neighbors
  int anchors_per_image = 250;
};

// Anchor pixel plus its in-bounds window neighbors, anchor excluded,
// in fixed row-major order. Never empty.
struct NeighborhoodSample {
  PixelCoord anchor;
  std::vector<PixelCoord> neighbors;
};

// Probabilities aligned with a NeighborhoodSample's neighbor order;
// non-negative, summing to 1.
struct TransitionDistribution {
  std::vector<double> p;
};

// Gaussian RBF similarity between two flow vectors with the flow-magnitude
// difference normalized by the anchor's squared magnitude (plus eps_flow):
//   exp(-(|fp - fq|^2 / (|fp|^2 + eps)) / (2 sigma^2))
// Always in (0, 1]; equals 1 iff fp == fq. Asymmetric in its arguments by
// construction: the denominator uses the anchor magnitude only.
double flow_similarity(Vec2 f_p, Vec2 f_q, const KernelConfig& cfg);

// Cosine of the angle between two embedding vectors. Rejects vectors with
// norm below 1e-8.
double embedding_similarity(std::span<const double> phi_p,
                            std::span<const double> phi_q);

TransitionDistribution flow_transition(const NeighborhoodSample& sample,
                                       const FlowField& flow,
                                       const KernelConfig& cfg);

// Cosine similarities against the anchor, clamped to [cos_floor, 1], then
// normalized. Norms carry a 1e-8 floor under the square root so the same
// figures are differentiable inside consistency_loss.
TransitionDistribution embedding_transition(const NeighborhoodSample& sample,
                                            const EmbeddingField& emb,
                                            const KernelConfig& cfg);

// -sum_q pf(q) log(pphi(q)). Rejects a zero pphi entry carrying nonzero pf
// weight.
double anchor_cross_entropy(const TransitionDistribution& p_f,
                            const TransitionDistribution& p_phi);

// Magnitude-weighted sum over anchors of the cross entropy between the
// flow-defined and embedding-defined neighbor distributions, divided by the
// anchor count. Differentiable w.r.t. the embedding tensor (layout
// dim x H x W). An empty sample list yields an exact constant zero.
autograd::Tensor consistency_loss(const std::vector<NeighborhoodSample>& samples,
                                  const FlowField& flow,
                                  const autograd::Tensor& embedding,
                                  const KernelConfig& cfg);

// Up to cfg.anchors_per_image distinct pixels drawn without replacement with
// probability proportional to flow magnitude; zero-magnitude pixels are never
// selected. All-zero flow yields an empty list.
std::vector<PixelCoord> sample_anchors(const FlowField& flow,
                                       const KernelConfig& cfg,
                                       std::uint64_t rng_seed);

// All in-bounds pixels of the (2r+1)^2 window centered at anchor, anchor
// excluded, row-major. Rejects out-of-bounds anchors and radius < 1.
NeighborhoodSample build_neighborhood(PixelCoord anchor, int width, int height,
                                      int radius);

}  // namespace flowseed::flowloss
