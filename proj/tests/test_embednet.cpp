#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "autograd/finite_diff.hpp"
#include "core/rng.hpp"
#include "embednet/embednet.hpp"
#include "flowloss/flowloss.hpp"

using namespace flowseed;
using autograd::Tensor;
using embednet::EmbeddingNetwork;
using embednet::NetworkConfig;
using embednet::SegmentationHead;

namespace {

Image noise_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(w, h);
  for (double& v : img.v) v = rng.uniform(lo, hi);
  return img;
}

double variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / v.size();
}

NetworkConfig small_cfg() {
  NetworkConfig cfg;
  cfg.embedding_dim = 8;
  cfg.levels = 3;
  cfg.base_channels = 8;
  return cfg;
}

}  // namespace

TEST_CASE("build_network is deterministic given the seed") {
  const EmbeddingNetwork a(small_cfg(), 42);
  const EmbeddingNetwork b(small_cfg(), 42);
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values() == pb[i].second.values());
  }
  const EmbeddingNetwork c(small_cfg(), 43);
  CHECK(c.named_parameters()[0].second.values() != pa[0].second.values());
}

TEST_CASE("embed_forward obeys the shape contract") {
  NetworkConfig cfg;
  cfg.embedding_dim = 16;
  const EmbeddingNetwork net(cfg, 7);
  Rng rng(1);
  const Image img = noise_image(64, 64, rng);
  autograd::NoGradGuard no_grad;
  const Tensor out = net.forward(img);
  CHECK(out.shape() == std::vector<int>{16, 64, 64});

  const Image odd = noise_image(40, 64, rng);  // 40 % 8 == 0, ok
  CHECK(net.forward(odd).shape() == std::vector<int>{16, 64, 40});

  CHECK_THROWS_AS(net.forward(noise_image(60, 64, rng)), std::invalid_argument);
  CHECK_THROWS_AS(net.forward(noise_image(64, 31, rng)), std::invalid_argument);
}

TEST_CASE("embed_forward is deterministic") {
  const EmbeddingNetwork net(small_cfg(), 3);
  Rng rng(2);
  const Image img = noise_image(32, 32, rng);
  autograd::NoGradGuard no_grad;
  CHECK(net.forward(img).values() == net.forward(img).values());
}

TEST_CASE("constant input gives a spatially constant interior embedding") {
  const EmbeddingNetwork net(small_cfg(), 11);
  const Image img(64, 64, 0.37);
  const EmbeddingField field = net.embed(img);
  // compare the receptive-field-safe center block against the exact center
  const double* center = field.at(32, 32);
  for (int y = 30; y <= 34; ++y) {
    for (int x = 30; x <= 34; ++x) {
      const double* e = field.at(x, y);
      for (int d = 0; d < field.dim; ++d) {
        CHECK(e[d] == doctest::Approx(center[d]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("initialization keeps the output variance within [0.1, 10] of the input") {
  Rng rng(5);
  Image white(48, 48);
  for (double& v : white.v) v = rng.normal();
  const double var_in = variance(white.v);
  const EmbeddingNetwork net(small_cfg(), 19);
  autograd::NoGradGuard no_grad;
  const double var_out = variance(net.forward(white).values());
  CHECK(var_out / var_in > 0.1);
  CHECK(var_out / var_in < 10.0);
}

TEST_CASE("segment_forward point behavior") {
  SegmentationHead zero;
  zero.weight = Tensor::zeros({1, 4, 1, 1}, true);
  zero.bias = Tensor::zeros({1}, true);
  Rng rng(6);
  std::vector<double> ev(4 * 6 * 6);
  for (double& v : ev) v = rng.uniform(-1.0, 1.0);
  const Tensor emb = Tensor::from_values({4, 6, 6}, ev);
  const Tensor p = embednet::segment_forward(zero, emb);
  for (double v : p.values()) CHECK(v == 0.5);

  SegmentationHead sat = zero;
  sat.bias = Tensor::from_values({1}, {50.0}, true);
  const Tensor saturated = embednet::segment_forward(sat, emb);
  for (double v : saturated.values()) {
    CHECK(v > 1.0 - 1e-9);
    CHECK(v < 1.0);
  }

  const Tensor wrong = Tensor::zeros({3, 6, 6});
  CHECK_THROWS_AS(embednet::segment_forward(zero, wrong), std::invalid_argument);
}

TEST_CASE("bce_loss values") {
  Image target(4, 4);
  Rng rng(7);
  for (double& v : target.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

  const Tensor half = Tensor::full({1, 4, 4}, 0.5);
  CHECK(embednet::bce_loss(half, target).item() ==
        doctest::Approx(0.69314718055994531).epsilon(1e-12));

  std::vector<double> right(16), wrong(16);
  for (int i = 0; i < 16; ++i) {
    right[i] = target.v[i] > 0.5 ? 1.0 - 1e-9 : 1e-9;
    wrong[i] = target.v[i] > 0.5 ? 1e-9 : 1.0 - 1e-9;
  }
  CHECK(embednet::bce_loss(Tensor::from_values({1, 4, 4}, right), target).item() <
        1e-6);
  CHECK(embednet::bce_loss(Tensor::from_values({1, 4, 4}, wrong), target).item() >
        10.0);
}

TEST_CASE("gradient through head + bce matches finite differences") {
  Rng rng(8);
  SegmentationHead head = SegmentationHead::create(4, 9);
  Image target(6, 6);
  for (double& v : target.v) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  std::vector<double> ev(4 * 6 * 6);
  for (double& v : ev) v = rng.uniform(-1.0, 1.0);
  const Tensor emb = Tensor::from_values({4, 6, 6}, ev);

  auto wrt_emb = [&](const Tensor& t) {
    return embednet::bce_loss(embednet::segment_forward(head, t), target);
  };
  CHECK(autograd::finite_difference_check(wrt_emb, emb, 1e-3) < 1e-3);

  auto wrt_weight = [&](const Tensor& t) {
    SegmentationHead h2;
    h2.weight = t;
    h2.bias = head.bias;
    return embednet::bce_loss(embednet::segment_forward(h2, emb), target);
  };
  CHECK(autograd::finite_difference_check(wrt_weight, head.weight.detach(), 1e-3) < 1e-3);
}

TEST_CASE("augmentation: identity draw, flip involution, binary masks") {
  Rng rng(10);
  const Image img = noise_image(20, 20, rng);
  Image mask(20, 20);
  for (int y = 6; y < 13; ++y) {
    for (int x = 4; x < 15; ++x) mask.at(x, y) = 1.0;
  }

  const embednet::AugmentDraw ident;
  const auto [img1, mask1] = embednet::apply_augment(img, mask, ident);
  CHECK(img1.v == img.v);
  CHECK(mask1.v == mask.v);

  embednet::AugmentDraw flip;
  flip.hflip = true;
  const auto [img2, mask2] = embednet::apply_augment(img, mask, flip);
  const auto [img3, mask3] = embednet::apply_augment(img2, mask2, flip);
  CHECK(img3.v == img.v);
  CHECK(mask3.v == mask.v);

  embednet::AugmentationConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto [ai, am] = embednet::augment(img, mask, cfg, 100 + trial);
    for (double v : am.v) CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("augmentation applies one shared transform to image and mask") {
  Rng rng(11);
  Image mask(40, 40);
  for (int y = 10; y < 28; ++y) {
    for (int x = 8; x < 30; ++x) mask.at(x, y) = 1.0;
  }
  embednet::AugmentationConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    Rng draw_rng(500 + trial);
    const auto draw = embednet::sample_augment(cfg, draw_rng);
    const auto [as_image, as_mask] = embednet::apply_augment(mask, mask, draw);
    size_t agree = 0;
    for (size_t i = 0; i < as_image.size(); ++i) {
      agree += ((as_image.v[i] >= 0.5) == (as_mask.v[i] >= 0.5));
    }
    CHECK(static_cast<double>(agree) / as_image.size() > 0.99);
  }
}

TEST_CASE("consistency_loss through the network passes finite differences") {
  NetworkConfig cfg;
  cfg.embedding_dim = 6;
  cfg.levels = 3;
  cfg.base_channels = 6;
  EmbeddingNetwork net(cfg, 13);
  Rng rng(14);
  const Image img = noise_image(16, 16, rng);
  FlowField flow(16, 16);
  for (double& v : flow.uv) v = rng.uniform(-3.0, 3.0);

  flowloss::KernelConfig kcfg;
  kcfg.anchors_per_image = 20;
  const auto anchors = flowloss::sample_anchors(flow, kcfg, 99);
  std::vector<flowloss::NeighborhoodSample> samples;
  for (PixelCoord a : anchors) {
    samples.push_back(flowloss::build_neighborhood(a, 16, 16, 2));
  }

  auto loss_fn = [&] {
    const Tensor emb = net.forward(img);
    return flowloss::consistency_loss(samples, flow, emb, kcfg);
  };

  auto params = net.named_parameters();
  int checked = 0;
  for (size_t pi = 0; pi < params.size(); pi += 5) {
    Tensor& param = params[pi].second;
    std::vector<int> coords;
    for (int i = 0; i < 3 && i < param.size(); ++i) {
      coords.push_back(static_cast<int>(rng.uniform_index(param.size())));
    }
    CHECK(autograd::finite_difference_check_param(loss_fn, param, 1e-3, coords) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 3);
}
