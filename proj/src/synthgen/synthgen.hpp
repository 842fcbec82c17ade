#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/flow_field.hpp"
#include "core/image.hpp"

namespace flowseed::synthgen {

// Maps p to R(theta) (p - c) + c + t.
struct RigidTransform {
  double tx = 0.0, ty = 0.0;
  double theta = 0.0;  // radians
  double cx = 0.0, cy = 0.0;

  Vec2 apply(Vec2 p) const;
  RigidTransform inverse() const;
};

struct TransformRanges {
  double t_min = -8.0, t_max = 8.0;            // pixels, both axes
  double rot_min = -0.17453292519943295;       // -10 degrees
  double rot_max = 0.17453292519943295;
};

// Uniform draws within the given bounds; center is fixed by the caller.
RigidTransform sample_transform(const TransformRanges& ranges, Vec2 center,
                                std::uint64_t rng_seed);

// Rest-pose layers plus the frame-1 -> frame-2 motion of each layer.
struct SceneSpec {
  Image background;
  Image foreground;
  Image alpha;  // in [0, 1]
  RigidTransform fg_transform;
  RigidTransform bg_transform;
  std::uint64_t seed = 0;  // recorded in the dataset manifest
};

struct SyntheticPair {
  Image frame1;
  Image frame2;
  FlowField forward_flow;
  FlowField backward_flow;
  Image fg_mask_frame1;   // {0, 1}
  Image occlusion_mask;   // {0, 1}
};

// Dense displacement of the rigid motion: f(x) = T(x) - x at every pixel.
FlowField analytic_flow(const RigidTransform& t, int width, int height);

// Per-pixel layer selection: foreground flow where alpha > 0.5.
FlowField compose_flow(const FlowField& fg_flow, const FlowField& bg_flow,
                       const Image& alpha);

// out(x) = bilinear sample of image at x + flow(x); edge-clamped.
Image warp_bilinear(const Image& image, const FlowField& flow);

// Composites the scene at rest pose (frame 1) and under the layer transforms
// (frame 2), with analytically exact forward/backward flow. A pixel is
// occluded when its forward landing point leaves the frame or any bilinear
// support pixel of the landing belongs to the other layer; everywhere else
// forward and backward flow are exact mutual inverses under bilinear
// sampling of the backward field.
SyntheticPair render_pair(const SceneSpec& spec);

// Procedural corpus: smooth-noise backgrounds under curved strokes and
// ellipses with a 1px antialiasing ramp. Foreground coverage is kept within
// [2%, 30%]. The background moves by a small independent transform in every
// other spec and stays static in the rest.
std::vector<SceneSpec> shapes_corpus(int count, int width, int height,
                                     std::uint64_t seed);

// Writes pairs in the io_cli dataset layout plus manifest.txt.
void generate_dataset(const std::vector<SceneSpec>& specs,
                      const std::string& out_dir);

}  // namespace flowseed::synthgen
