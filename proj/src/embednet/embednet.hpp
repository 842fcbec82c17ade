#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autograd/tensor.hpp"
#include "core/flow_field.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"

namespace flowseed::embednet {

struct NetworkConfig {
  int embedding_dim = 16;
  int levels = 3;
  int base_channels = 16;
  int input_channels = 1;
  bool operator==(const NetworkConfig&) const = default;
};

struct ConvParams {
  autograd::Tensor weight;
  autograd::Tensor bias;
};

// Encoder-decoder with skip connections producing one embedding vector per
// pixel: per level two 3x3 conv+relu, avg-pool between levels, mirrored
// decoder with nearest upsampling and skip concatenation, and a final 3x3
// conv to embedding_dim. Same-padding keeps spatial extents; inputs must be
// divisible by 2^levels.
class EmbeddingNetwork {
 public:
  EmbeddingNetwork(const NetworkConfig& cfg, std::uint64_t seed);

  // Embedding tensor, layout embedding_dim x H x W. Recorded on the tape
  // when gradients are enabled.
  autograd::Tensor forward(const Image& image) const;

  // Detached per-pixel field for evaluation and visualization.
  EmbeddingField embed(const Image& image) const;

  std::vector<std::pair<std::string, autograd::Tensor>> named_parameters() const;
  std::vector<autograd::Tensor> parameters() const;

  const NetworkConfig& config() const { return cfg_; }
  int spatial_divisor() const { return 1 << cfg_.levels; }

  // Copies values from checkpoint tensors, matched by name and shape.
  void load_parameters(
      const std::vector<std::pair<std::string, autograd::Tensor>>& params);

  // Reconstructs the configuration implied by checkpoint parameter names and
  // shapes (eval has no config file).
  static NetworkConfig infer_config(
      const std::vector<std::pair<std::string, autograd::Tensor>>& params);

 private:
  struct Level {
    ConvParams conv1, conv2;
  };
  NetworkConfig cfg_;
  std::vector<Level> enc_;  // enc_[levels-1] is the bottom
  std::vector<Level> dec_;  // levels-1 entries, dec_[i] operates at level i
  ConvParams final_;
};

// 1x1 convolution from embedding_dim to one sigmoid probability per pixel.
struct SegmentationHead {
  autograd::Tensor weight;  // 1 x dim x 1 x 1
  autograd::Tensor bias;    // 1

  static SegmentationHead create(int dim, std::uint64_t seed);
  int dim() const { return weight.shape()[1]; }
};

// sigmoid(1x1 conv) over an embedding tensor (dim x H x W) -> 1 x H x W.
autograd::Tensor segment_forward(const SegmentationHead& head,
                                 const autograd::Tensor& embedding);

// Mean over pixels of -[t log p + (1-t) log(1-p)]. Probabilities are clamped
// to [1e-12, 1-1e-12] so saturated predictions stay finite.
autograd::Tensor bce_loss(const autograd::Tensor& pred, const Image& target);

struct AugmentationConfig {
  double hflip_prob = 0.5;
  double rotation_deg = 20.0;  // uniform in [-r, r]
  double scale_min = 0.8;
  double scale_max = 1.2;
  double shear_deg = 20.0;  // uniform in [-s, s]
};

struct AugmentDraw {
  bool hflip = false;
  double rot_rad = 0.0;
  double scale = 1.0;
  double shear_rad = 0.0;
};

// Draw order: flip, rotation, scale, shear.
AugmentDraw sample_augment(const AugmentationConfig& cfg, Rng& rng);

// One shared affine transform (flip o rotate o scale o shear about the image
// center) applied to both: image bilinear, mask nearest-neighbor,
// out-of-bounds filled with 0.
std::pair<Image, Image> apply_augment(const Image& image, const Image& mask,
                                      const AugmentDraw& draw);

std::pair<Image, Image> augment(const Image& image, const Image& mask,
                                const AugmentationConfig& cfg,
                                std::uint64_t rng_seed);

}  // namespace flowseed::embednet
