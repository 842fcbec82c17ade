#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "autograd/finite_diff.hpp"
#include "core/rng.hpp"
#include "flowloss/flowloss.hpp"

using namespace flowseed;
using flowloss::KernelConfig;
using flowloss::NeighborhoodSample;
using flowloss::TransitionDistribution;

namespace {

FlowField random_flow(int w, int h, Rng& rng, double amp = 4.0) {
  FlowField f(w, h);
  for (double& v : f.uv) v = rng.uniform(-amp, amp);
  return f;
}

EmbeddingField random_embedding(int w, int h, int dim, Rng& rng) {
  EmbeddingField e(w, h, dim);
  for (double& v : e.data) v = rng.uniform(-1.0, 1.0);
  return e;
}

double entropy_sum(const TransitionDistribution& d) {
  return std::accumulate(d.p.begin(), d.p.end(), 0.0);
}

}  // namespace

TEST_CASE("flow_similarity point values") {
  KernelConfig cfg;  // sigma 0.5, eps 1
  CHECK(flowloss::flow_similarity({3.0, -2.0}, {3.0, -2.0}, cfg) == 1.0);
  CHECK(flowloss::flow_similarity({0.0, 0.0}, {0.0, 0.0}, cfg) == 1.0);
  // exp(-1) for fp=(1,0), fq=(0,0)
  CHECK(flowloss::flow_similarity({1.0, 0.0}, {0.0, 0.0}, cfg) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-13));
}

TEST_CASE("flow_similarity is in (0,1], is 1 iff equal, and is asymmetric") {
  KernelConfig cfg;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec2 a{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    const Vec2 b{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    const double s = flowloss::flow_similarity(a, b, cfg);
    CHECK(s > 0.0);
    CHECK(s <= 1.0);
    if (a.x != b.x || a.y != b.y) CHECK(s < 1.0);
  }
  // Denominator uses the anchor magnitude only.
  const double ab = flowloss::flow_similarity({4.0, 0.0}, {1.0, 0.0}, cfg);
  const double ba = flowloss::flow_similarity({1.0, 0.0}, {4.0, 0.0}, cfg);
  CHECK(ab != ba);
}

TEST_CASE("embedding_similarity point values and zero-norm rejection") {
  const std::vector<double> a{1.0, 0.0};
  const std::vector<double> b{1.0, 1.0};
  const std::vector<double> c{0.0, 1.0};
  CHECK(flowloss::embedding_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(flowloss::embedding_similarity(a, c) == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(flowloss::embedding_similarity(a, b) ==
        doctest::Approx(0.70710678118654752).epsilon(1e-13));
  const std::vector<double> tiny{1e-12, 0.0};
  CHECK_THROWS_AS(flowloss::embedding_similarity(a, tiny), std::invalid_argument);
}

TEST_CASE("flow_transition: uniform, two-neighbor evaluation, single neighbor") {
  KernelConfig cfg;
  FlowField flow(5, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      flow.u(x, y) = 1.5;
      flow.v(x, y) = -0.5;
    }
  }
  const auto sample = flowloss::build_neighborhood({2, 2}, 5, 5, 2);
  const auto uniform = flowloss::flow_transition(sample, flow, cfg);
  CHECK(uniform.p.size() == 24);
  for (double p : uniform.p) CHECK(p == doctest::Approx(1.0 / 24).epsilon(1e-12));

  // anchor (2,0) with neighbors (2,0) and (0,0): S = (1, exp(-1.6))
  FlowField f2(3, 1);
  f2.u(0, 0) = 2.0;
  f2.v(0, 0) = 0.0;
  f2.u(1, 0) = 2.0;
  f2.u(2, 0) = 0.0;
  NeighborhoodSample s2{{0, 0}, {{1, 0}, {2, 0}}};
  const auto dist = flowloss::flow_transition(s2, f2, cfg);
  CHECK(dist.p[0] == doctest::Approx(0.83201838513392448).epsilon(1e-12));
  CHECK(dist.p[1] == doctest::Approx(0.16798161486607552).epsilon(1e-12));

  NeighborhoodSample s1{{0, 0}, {{1, 0}}};
  CHECK(flowloss::flow_transition(s1, f2, cfg).p == std::vector<double>{1.0});
}

TEST_CASE("embedding_transition: uniform, clamped negative cosine, single neighbor") {
  KernelConfig cfg;
  EmbeddingField e(5, 5, 3);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      double* v = e.at(x, y);
      v[0] = 0.3;
      v[1] = -0.7;
      v[2] = 0.2;
    }
  }
  const auto sample = flowloss::build_neighborhood({2, 2}, 5, 5, 2);
  const auto uniform = flowloss::embedding_transition(sample, e, cfg);
  for (double p : uniform.p) CHECK(p == doctest::Approx(1.0 / 24).epsilon(1e-9));

  // cosines (1, -0.5) -> clamped (1, 1e-4) -> P = (0.99990..., 0.00009999...)
  EmbeddingField pair(3, 1, 2);
  pair.at(0, 0)[0] = 1.0;
  pair.at(0, 0)[1] = 0.0;
  pair.at(1, 0)[0] = 1.0;
  pair.at(1, 0)[1] = 0.0;
  // unit vector at 120 degrees: cosine vs (1,0) is -0.5
  pair.at(2, 0)[0] = -0.5;
  pair.at(2, 0)[1] = std::sqrt(3.0) / 2.0;
  NeighborhoodSample s2{{0, 0}, {{1, 0}, {2, 0}}};
  const auto dist = flowloss::embedding_transition(s2, pair, cfg);
  CHECK(dist.p[0] == doctest::Approx(0.99990000999900010).epsilon(1e-9));
  CHECK(dist.p[1] == doctest::Approx(0.00009999000099990001).epsilon(1e-9));

  NeighborhoodSample s1{{0, 0}, {{1, 0}}};
  CHECK(flowloss::embedding_transition(s1, pair, cfg).p == std::vector<double>{1.0});
}

TEST_CASE("embedding_transition is invariant under positive per-pixel rescaling") {
  KernelConfig cfg;
  Rng rng(12);
  EmbeddingField e = random_embedding(7, 7, 4, rng);
  EmbeddingField scaled = e;
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) {
      const double s = rng.uniform(0.5, 3.0);
      double* v = scaled.at(x, y);
      for (int d = 0; d < 4; ++d) v[d] *= s;
    }
  }
  const auto sample = flowloss::build_neighborhood({3, 3}, 7, 7, 2);
  const auto da = flowloss::embedding_transition(sample, e, cfg);
  const auto db = flowloss::embedding_transition(sample, scaled, cfg);
  for (size_t i = 0; i < da.p.size(); ++i) {
    CHECK(da.p[i] == doctest::Approx(db.p[i]).epsilon(1e-6));
  }
}

TEST_CASE("anchor_cross_entropy: uniform, one-hot, Gibbs inequality") {
  TransitionDistribution uniform;
  uniform.p.assign(24, 1.0 / 24);
  CHECK(flowloss::anchor_cross_entropy(uniform, uniform) ==
        doctest::Approx(3.1780538303479456).epsilon(1e-12));

  TransitionDistribution onehot;
  onehot.p = {0.0, 1.0, 0.0};
  CHECK(flowloss::anchor_cross_entropy(onehot, onehot) == 0.0);

  TransitionDistribution bad;
  bad.p = {0.5, 0.0, 0.5};
  CHECK_THROWS_AS(flowloss::anchor_cross_entropy(onehot, TransitionDistribution{{1.0, 0.0, 0.0}}),
                  std::invalid_argument);

  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(23));
    TransitionDistribution pf, pq;
    double sf = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      pf.p.push_back(rng.uniform(1e-3, 1.0));
      pq.p.push_back(rng.uniform(1e-3, 1.0));
      sf += pf.p.back();
      sq += pq.p.back();
    }
    for (double& v : pf.p) v /= sf;
    for (double& v : pq.p) v /= sq;
    CHECK(flowloss::anchor_cross_entropy(pf, pq) >=
          flowloss::anchor_cross_entropy(pf, pf) - 1e-12);
  }
}

TEST_CASE("transition distributions sum to 1 with non-negative entries") {
  KernelConfig cfg;
  Rng rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 6 + static_cast<int>(rng.uniform_index(6));
    const int h = 6 + static_cast<int>(rng.uniform_index(6));
    const FlowField flow = random_flow(w, h, rng);
    const EmbeddingField emb = random_embedding(w, h, 5, rng);
    const PixelCoord anchor{static_cast<int>(rng.uniform_index(w)),
                            static_cast<int>(rng.uniform_index(h))};
    const auto sample = flowloss::build_neighborhood(anchor, w, h, 2);
    for (const auto& dist : {flowloss::flow_transition(sample, flow, cfg),
                             flowloss::embedding_transition(sample, emb, cfg)}) {
      CHECK(entropy_sum(dist) == doctest::Approx(1.0).epsilon(1e-9));
      for (double p : dist.p) CHECK(p >= 0.0);
    }
  }
}

TEST_CASE("build_neighborhood counts and contract cases") {
  const auto interior = flowloss::build_neighborhood({10, 10}, 32, 32, 2);
  CHECK(interior.neighbors.size() == 24);  // 5*5-1

  const auto corner = flowloss::build_neighborhood({0, 0}, 32, 32, 2);
  CHECK(corner.neighbors.size() == 8);  // clipped 3x3 window minus anchor

  CHECK_THROWS_AS(flowloss::build_neighborhood({40, 2}, 32, 32, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(flowloss::build_neighborhood({1, 1}, 32, 32, 0),
                  std::invalid_argument);

  // fixed row-major order, anchor excluded
  const auto s = flowloss::build_neighborhood({1, 1}, 4, 4, 1);
  const std::vector<PixelCoord> expect{{0, 0}, {1, 0}, {2, 0}, {0, 1},
                                       {2, 1}, {0, 2}, {1, 2}, {2, 2}};
  CHECK(s.neighbors == expect);
}

TEST_CASE("consistency_loss: zero flow, direct weighted sum, empty samples") {
  KernelConfig cfg;
  Rng rng(15);

  // zero flow -> exactly zero loss for any embedding
  FlowField zero(8, 8);
  EmbeddingField emb = random_embedding(8, 8, 4, rng);
  autograd::Tensor embt = autograd::Tensor::from_values(
      {4, 8, 8},
      [&] {
        std::vector<double> v(4 * 8 * 8);
        for (int d = 0; d < 4; ++d)
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
              v[(d * 8 + y) * 8 + x] = emb.at(x, y)[d];
        return v;
      }());
  std::vector<NeighborhoodSample> samples;
  for (int i = 0; i < 5; ++i) {
    samples.push_back(flowloss::build_neighborhood(
        {static_cast<int>(rng.uniform_index(8)), static_cast<int>(rng.uniform_index(8))},
        8, 8, 2));
  }
  CHECK(flowloss::consistency_loss(samples, zero, embt, cfg).item() == 0.0);

  // empty sample list -> exact zero
  CHECK(flowloss::consistency_loss({}, zero, embt, cfg).item() == 0.0);

  // single anchor: loss = |f_p| * H(P_f, P_phi) (count = 1)
  FlowField flow = random_flow(8, 8, rng);
  const auto sample = flowloss::build_neighborhood({4, 4}, 8, 8, 2);
  const double w = flow.magnitude(4, 4);
  const double h_direct = flowloss::anchor_cross_entropy(
      flowloss::flow_transition(sample, flow, cfg),
      flowloss::embedding_transition(sample, emb, cfg));
  const double loss =
      flowloss::consistency_loss({sample}, flow, embt, cfg).item();
  CHECK(loss == doctest::Approx(w * h_direct).epsilon(1e-10));
}

TEST_CASE("consistency_loss matches the standalone kernels on many anchors") {
  KernelConfig cfg;
  Rng rng(16);
  const FlowField flow = random_flow(10, 9, rng);
  const EmbeddingField emb = random_embedding(10, 9, 6, rng);
  std::vector<double> v(6 * 9 * 10);
  for (int d = 0; d < 6; ++d)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 10; ++x) v[(d * 9 + y) * 10 + x] = emb.at(x, y)[d];
  const autograd::Tensor embt = autograd::Tensor::from_values({6, 9, 10}, v);

  std::vector<NeighborhoodSample> samples;
  double expected = 0.0;
  for (int i = 0; i < 12; ++i) {
    const PixelCoord a{static_cast<int>(rng.uniform_index(10)),
                       static_cast<int>(rng.uniform_index(9))};
    const auto s = flowloss::build_neighborhood(a, 10, 9, 2);
    expected += flow.magnitude(a.x, a.y) *
                flowloss::anchor_cross_entropy(
                    flowloss::flow_transition(s, flow, cfg),
                    flowloss::embedding_transition(s, emb, cfg));
    samples.push_back(s);
  }
  expected /= 12.0;
  CHECK(flowloss::consistency_loss(samples, flow, embt, cfg).item() ==
        doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("consistency_loss gradient passes the finite-difference oracle") {
  KernelConfig cfg;
  Rng rng(17);
  const FlowField flow = random_flow(8, 8, rng);
  // Locally coherent field like a real embedding output: a shared base
  // direction plus per-pixel noise. Fully random vectors put cosines next to
  // the clamp kink where the central-difference oracle's own truncation
  // error exceeds the 1e-3 budget at h=1e-3.
  std::vector<double> base{0.8, -0.5, 0.4, 0.6};
  std::vector<double> v(4 * 8 * 8);
  for (int d = 0; d < 4; ++d) {
    for (int i = 0; i < 64; ++i) {
      v[d * 64 + i] = base[d] + 0.35 * rng.uniform(-1.0, 1.0);
    }
  }
  const autograd::Tensor embt = autograd::Tensor::from_values({4, 8, 8}, v);

  std::vector<NeighborhoodSample> samples;
  for (int i = 0; i < 6; ++i) {
    samples.push_back(flowloss::build_neighborhood(
        {static_cast<int>(rng.uniform_index(8)), static_cast<int>(rng.uniform_index(8))},
        8, 8, 2));
  }
  auto f = [&](const autograd::Tensor& t) {
    return flowloss::consistency_loss(samples, flow, t, cfg);
  };
  CHECK(autograd::finite_difference_check(f, embt, 1e-3) < 1e-3);
}

TEST_CASE("sample_anchors: support bound, zero exclusion, determinism") {
  KernelConfig cfg;  // 250 anchors
  FlowField flow(32, 32);
  for (int y = 10; y < 20; ++y) {
    for (int x = 10; x < 20; ++x) flow.u(x, y) = 1.0;  // 100 moving pixels
  }
  const auto anchors = flowloss::sample_anchors(flow, cfg, 123);
  CHECK(anchors.size() == 100);
  for (PixelCoord a : anchors) {
    CHECK(a.x >= 10);
    CHECK(a.x < 20);
    CHECK(a.y >= 10);
    CHECK(a.y < 20);
  }

  const auto again = flowloss::sample_anchors(flow, cfg, 123);
  CHECK(anchors == again);

  FlowField zero(16, 16);
  CHECK(flowloss::sample_anchors(zero, cfg, 9).empty());
}

TEST_CASE("sample_anchors: uniform magnitude with request = pixel count selects all") {
  KernelConfig cfg;
  cfg.anchors_per_image = 36;
  FlowField flow(6, 6);
  for (double& v : flow.uv) v = 0.7;
  const auto anchors = flowloss::sample_anchors(flow, cfg, 55);
  CHECK(anchors.size() == 36);
  std::map<std::pair<int, int>, int> seen;
  for (PixelCoord a : anchors) seen[{a.x, a.y}]++;
  CHECK(seen.size() == 36);
}

TEST_CASE("sample_anchors follows magnitude-proportional selection frequencies") {
  KernelConfig cfg;
  cfg.anchors_per_image = 1;
  FlowField flow(2, 1);
  flow.u(0, 0) = 2.0;  // pixel 0: weight 2
  flow.u(1, 0) = 1.0;  // pixel 1: weight 1
  int picked_first = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto a = flowloss::sample_anchors(flow, cfg, 1000 + i);
    REQUIRE(a.size() == 1);
    picked_first += a[0].x == 0 ? 1 : 0;
  }
  const double freq = static_cast<double>(picked_first) / draws;
  CHECK(freq == doctest::Approx(2.0 / 3.0).epsilon(0.075));
}
