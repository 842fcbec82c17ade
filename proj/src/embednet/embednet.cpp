#include "embednet/embednet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace flowseed::embednet {

using autograd::Tensor;

namespace {

Tensor he_conv_weight(int c_out, int c_in, int k, Rng& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  std::vector<double> w(static_cast<size_t>(c_out) * c_in * k * k);
  for (double& v : w) v = stddev * rng.normal();
  return Tensor::from_values({c_out, c_in, k, k}, std::move(w), true);
}

ConvParams make_conv(int c_out, int c_in, int k, Rng& rng) {
  return {he_conv_weight(c_out, c_in, k, rng),
          Tensor::zeros({c_out}, true)};
}

Tensor conv_relu(const Tensor& x, const ConvParams& p) {
  return autograd::relu(autograd::conv2d(x, p.weight, p.bias, 1));
}

}  // namespace

EmbeddingNetwork::EmbeddingNetwork(const NetworkConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.embedding_dim < 1 || cfg.levels < 1 || cfg.base_channels < 1 ||
      cfg.input_channels < 1)
    throw std::invalid_argument("EmbeddingNetwork: invalid configuration");
  Rng rng(seed);
  enc_.resize(cfg.levels);
  for (int i = 0; i < cfg.levels; ++i) {
    const int width = cfg.base_channels << i;
    const int in = i == 0 ? cfg.input_channels : (cfg.base_channels << (i - 1));
    enc_[i].conv1 = make_conv(width, in, 3, rng);
    enc_[i].conv2 = make_conv(width, width, 3, rng);
  }
  dec_.resize(cfg.levels - 1);
  for (int i = cfg.levels - 2; i >= 0; --i) {
    const int width = cfg.base_channels << i;
    const int in = width + (cfg.base_channels << (i + 1));  // skip + upsampled
    dec_[i].conv1 = make_conv(width, in, 3, rng);
    dec_[i].conv2 = make_conv(width, width, 3, rng);
  }
  final_ = make_conv(cfg.embedding_dim, cfg.base_channels, 3, rng);
}

Tensor EmbeddingNetwork::forward(const Image& image) const {
  const int div = spatial_divisor();
  if (image.width % div != 0 || image.height % div != 0)
    throw std::invalid_argument(
        "embed_forward: extents " + std::to_string(image.width) + "x" +
        std::to_string(image.height) + " are not divisible by " +
        std::to_string(div) + "; pad the input to a multiple of " +
        std::to_string(div));
  if (cfg_.input_channels != 1)
    throw std::logic_error("embed_forward: only grayscale inputs are wired up");

  Tensor x = Tensor::from_values({1, image.height, image.width}, image.v);
  std::vector<Tensor> skips;
  skips.reserve(cfg_.levels - 1);
  for (int i = 0; i < cfg_.levels; ++i) {
    x = conv_relu(x, enc_[i].conv1);
    x = conv_relu(x, enc_[i].conv2);
    if (i < cfg_.levels - 1) {
      skips.push_back(x);
      x = autograd::avg_pool2(x);
    }
  }
  for (int i = cfg_.levels - 2; i >= 0; --i) {
    x = autograd::nearest_upsample2(x);
    x = autograd::concat_channels(skips[i], x);
    x = conv_relu(x, dec_[i].conv1);
    x = conv_relu(x, dec_[i].conv2);
  }
  return autograd::conv2d(x, final_.weight, final_.bias, 1);
}

EmbeddingField EmbeddingNetwork::embed(const Image& image) const {
  autograd::NoGradGuard no_grad;
  const Tensor out = forward(image);
  const int dim = out.shape()[0];
  const int h = out.shape()[1];
  const int w = out.shape()[2];
  EmbeddingField field(w, h, dim);
  const double* src = out.values().data();
  const size_t plane = static_cast<size_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = field.at(x, y);
      const size_t off = static_cast<size_t>(y) * w + x;
      for (int d = 0; d < dim; ++d) dst[d] = src[d * plane + off];
    }
  }
  return field;
}

std::vector<std::pair<std::string, Tensor>> EmbeddingNetwork::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push = [&out](const std::string& prefix, const ConvParams& p) {
    out.emplace_back(prefix + ".weight", p.weight);
    out.emplace_back(prefix + ".bias", p.bias);
  };
  for (size_t i = 0; i < enc_.size(); ++i) {
    push("enc" + std::to_string(i) + ".conv1", enc_[i].conv1);
    push("enc" + std::to_string(i) + ".conv2", enc_[i].conv2);
  }
  for (size_t i = 0; i < dec_.size(); ++i) {
    push("dec" + std::to_string(i) + ".conv1", dec_[i].conv1);
    push("dec" + std::to_string(i) + ".conv2", dec_[i].conv2);
  }
  push("final", final_);
  return out;
}

std::vector<Tensor> EmbeddingNetwork::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void EmbeddingNetwork::load_parameters(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : params) by_name[name] = &t;
  for (auto& [name, t] : named_parameters()) {
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("load_parameters: checkpoint is missing '" + name + "'");
    if (it->second->shape() != t.shape())
      throw std::runtime_error("load_parameters: shape mismatch for '" + name + "'");
    t.values_mut() = it->second->values();
  }
}

NetworkConfig EmbeddingNetwork::infer_config(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  NetworkConfig cfg;
  int max_enc = -1;
  bool found_first = false, found_final = false;
  for (const auto& [name, t] : params) {
    if (name.rfind("enc", 0) == 0 && name.find(".conv1.weight") != std::string::npos) {
      const int idx = std::stoi(name.substr(3, name.find('.') - 3));
      max_enc = std::max(max_enc, idx);
      if (idx == 0) {
        cfg.base_channels = t.shape()[0];
        cfg.input_channels = t.shape()[1];
        found_first = true;
      }
    } else if (name == "final.weight") {
      cfg.embedding_dim = t.shape()[0];
      found_final = true;
    }
  }
  if (!found_first || !found_final || max_enc < 0)
    throw std::runtime_error("infer_config: not an embedding network checkpoint");
  cfg.levels = max_enc + 1;
  return cfg;
}

SegmentationHead SegmentationHead::create(int dim, std::uint64_t seed) {
  Rng rng(seed);
  const double stddev = std::sqrt(1.0 / dim);
  std::vector<double> w(dim);
  for (double& v : w) v = stddev * rng.normal();
  SegmentationHead head;
  head.weight = Tensor::from_values({1, dim, 1, 1}, std::move(w), true);
  head.bias = Tensor::zeros({1}, true);
  return head;
}

Tensor segment_forward(const SegmentationHead& head, const Tensor& embedding) {
  if (embedding.shape().size() != 3 || embedding.shape()[0] != head.dim())
    throw std::invalid_argument("segment_forward: embedding dim does not match head");
  return autograd::sigmoid(autograd::conv2d(embedding, head.weight, head.bias, 0));
}

Tensor bce_loss(const Tensor& pred, const Image& target) {
  const auto& shape = pred.shape();
  const bool plane3 = shape.size() == 3 && shape[0] == 1;
  if (!plane3 && shape.size() != 2)
    throw std::invalid_argument("bce_loss: prediction must be one plane");
  const int h = plane3 ? shape[1] : shape[0];
  const int w = plane3 ? shape[2] : shape[1];
  if (w != target.width || h != target.height)
    throw std::invalid_argument("bce_loss: prediction and target extents differ");

  constexpr double kEps = 1e-12;
  const double* p = pred.values().data();
  const double* t = target.v.data();
  const size_t n = target.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double pi = std::clamp(p[i], kEps, 1.0 - kEps);
    acc -= t[i] * std::log(pi) + (1.0 - t[i]) * std::log(1.0 - pi);
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> target_copy = target.v;
  auto backward = [target_copy = std::move(target_copy), inv_n,
                   kEps](autograd::detail::Node& self) {
    autograd::detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    const double g = self.grad[0] * inv_n;
    for (size_t i = 0; i < target_copy.size(); ++i) {
      const double pi = in->values[i];
      if (pi <= kEps || pi >= 1.0 - kEps) continue;  // clamped region is flat
      in->grad[i] += g * (-target_copy[i] / pi + (1.0 - target_copy[i]) / (1.0 - pi));
    }
  };
  return autograd::make_op({1}, {acc * inv_n}, {pred}, std::move(backward));
}

AugmentDraw sample_augment(const AugmentationConfig& cfg, Rng& rng) {
  AugmentDraw draw;
  draw.hflip = rng.uniform() < cfg.hflip_prob;
  const double deg = 3.141592653589793 / 180.0;
  draw.rot_rad = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * deg;
  draw.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  draw.shear_rad = rng.uniform(-cfg.shear_deg, cfg.shear_deg) * deg;
  return draw;
}

std::pair<Image, Image> apply_augment(const Image& image, const Image& mask,
                                      const AugmentDraw& draw) {
  if (image.width != mask.width || image.height != mask.height)
    throw std::invalid_argument("augment: image and mask extents differ");

  // Forward map M = F * R * (s I) * Shear; pixels are pulled through M^-1.
  const double cr = std::cos(draw.rot_rad), sr = std::sin(draw.rot_rad);
  const double sh = std::tan(draw.shear_rad);
  const double s = draw.scale;
  // R * sI * Shear
  double m00 = s * cr, m01 = s * (cr * sh - sr);
  double m10 = s * sr, m11 = s * (sr * sh + cr);
  if (draw.hflip) {
    m00 = -m00;
    m01 = -m01;
  }
  const double det = m00 * m11 - m01 * m10;
  if (std::abs(det) < 1e-12) throw std::runtime_error("augment: singular transform");
  const double i00 = m11 / det, i01 = -m01 / det;
  const double i10 = -m10 / det, i11 = m00 / det;
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;

  Image out_img(image.width, image.height);
  Image out_mask(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      out_img.at(x, y) = bilinear_sample(image, sx, sy, Border::Zero);
      const int nx = static_cast<int>(std::lround(sx));
      const int ny = static_cast<int>(std::lround(sy));
      out_mask.at(x, y) = mask.in_bounds(nx, ny) ? mask.at(nx, ny) : 0.0;
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

std::pair<Image, Image> augment(const Image& image, const Image& mask,
                                const AugmentationConfig& cfg,
                                std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return apply_augment(image, mask, sample_augment(cfg, rng));
}

}  // namespace flowseed::embednet
