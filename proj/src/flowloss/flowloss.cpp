#include "flowloss/flowloss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/rng.hpp"

namespace flowseed::flowloss {

namespace {

// Added under the square root of every norm inside the differentiable path
// so a zero embedding vector cannot produce a division by zero.
constexpr double kNormFloorEps = 1e-8;

void check_sample(const NeighborhoodSample& sample, int width, int height) {
  if (sample.neighbors.empty())
    throw std::invalid_argument("neighborhood sample has no neighbors");
  auto in = [&](PixelCoord c) {
    return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height;
  };
  if (!in(sample.anchor))
    throw std::invalid_argument("neighborhood anchor out of bounds");
  for (PixelCoord q : sample.neighbors) {
    if (!in(q)) throw std::invalid_argument("neighborhood neighbor out of bounds");
  }
}

}  // namespace

double flow_similarity(Vec2 f_p, Vec2 f_q, const KernelConfig& cfg) {
  const double du = f_p.x - f_q.x;
  const double dv = f_p.y - f_q.y;
  const double diff_sq = du * du + dv * dv;
  const double mag_sq = f_p.x * f_p.x + f_p.y * f_p.y;
  const double rel = diff_sq / (mag_sq + cfg.eps_flow);
  return std::exp(-rel / (2.0 * cfg.sigma * cfg.sigma));
}

double embedding_similarity(std::span<const double> phi_p,
                            std::span<const double> phi_q) {
  if (phi_p.size() != phi_q.size())
    throw std::invalid_argument("embedding_similarity: dimension mismatch");
  double ss_p = 0.0, ss_q = 0.0, dot = 0.0;
  for (size_t i = 0; i < phi_p.size(); ++i) {
    ss_p += phi_p[i] * phi_p[i];
    ss_q += phi_q[i] * phi_q[i];
    dot += phi_p[i] * phi_q[i];
  }
  const double n_p = std::sqrt(ss_p);
  const double n_q = std::sqrt(ss_q);
  if (n_p < 1e-8 || n_q < 1e-8)
    throw std::invalid_argument("embedding_similarity: vector norm below floor");
  return dot / (n_p * n_q);
}

TransitionDistribution flow_transition(const NeighborhoodSample& sample,
                                       const FlowField& flow,
                                       const KernelConfig& cfg) {
  check_sample(sample, flow.width, flow.height);
  const Vec2 f_p = flow.at(sample.anchor.x, sample.anchor.y);
  TransitionDistribution dist;
  dist.p.reserve(sample.neighbors.size());
  double total = 0.0;
  for (PixelCoord q : sample.neighbors) {
    const double s = flow_similarity(f_p, flow.at(q.x, q.y), cfg);
    dist.p.push_back(s);
    total += s;
  }
  for (double& v : dist.p) v /= total;
  return dist;
}

TransitionDistribution embedding_transition(const NeighborhoodSample& sample,
                                            const EmbeddingField& emb,
                                            const KernelConfig& cfg) {
  check_sample(sample, emb.width, emb.height);
  const double* u = emb.at(sample.anchor.x, sample.anchor.y);
  double ss_u = 0.0;
  for (int d = 0; d < emb.dim; ++d) ss_u += u[d] * u[d];
  const double un = std::sqrt(ss_u + kNormFloorEps);

  TransitionDistribution dist;
  dist.p.reserve(sample.neighbors.size());
  double total = 0.0;
  for (PixelCoord q : sample.neighbors) {
    const double* v = emb.at(q.x, q.y);
    double ss_v = 0.0, dot = 0.0;
    for (int d = 0; d < emb.dim; ++d) {
      ss_v += v[d] * v[d];
      dot += u[d] * v[d];
    }
    const double c = dot / (un * std::sqrt(ss_v + kNormFloorEps));
    const double s = std::clamp(c, cfg.cos_floor, 1.0);
    dist.p.push_back(s);
    total += s;
  }
  for (double& v : dist.p) v /= total;
  return dist;
}

double anchor_cross_entropy(const TransitionDistribution& p_f,
                            const TransitionDistribution& p_phi) {
  if (p_f.p.size() != p_phi.p.size())
    throw std::invalid_argument("anchor_cross_entropy: distributions not aligned");
  double acc = 0.0;
  for (size_t i = 0; i < p_f.p.size(); ++i) {
    const double w = p_f.p[i];
    if (w == 0.0) continue;
    if (p_phi.p[i] <= 0.0)
      throw std::invalid_argument(
          "anchor_cross_entropy: zero probability under nonzero weight");
    acc -= w * std::log(p_phi.p[i]);
  }
  return acc;
}

namespace {

struct SavedNeighbor {
  int x, y;
  double pf;  // flow transition probability (constant w.r.t. embedding)
  double c;   // unclamped cosine
  double s;   // clamped cosine
  double vn;  // floored neighbor norm
};

struct SavedAnchor {
  int x, y;
  double weight;  // |f_p| / anchor count
  double un;      // floored anchor norm
  double total;   // sum of clamped cosines
  int begin, count;
};

}  // namespace

autograd::Tensor consistency_loss(const std::vector<NeighborhoodSample>& samples,
                                  const FlowField& flow,
                                  const autograd::Tensor& embedding,
                                  const KernelConfig& cfg) {
  if (samples.empty()) return autograd::Tensor::scalar(0.0);
  if (embedding.shape().size() != 3)
    throw std::invalid_argument("consistency_loss: embedding must be dim x H x W");
  const int dim = embedding.shape()[0];
  const int h = embedding.shape()[1];
  const int w = embedding.shape()[2];
  if (flow.width != w || flow.height != h)
    throw std::invalid_argument("consistency_loss: flow extents do not match embedding");

  const double* ev = embedding.values().data();
  const size_t plane = static_cast<size_t>(h) * w;
  const double inv_n = 1.0 / static_cast<double>(samples.size());

  std::vector<SavedAnchor> anchors;
  anchors.reserve(samples.size());
  std::vector<SavedNeighbor> nbrs;

  double loss = 0.0;
  std::vector<double> u(dim), v(dim);
  for (const NeighborhoodSample& sample : samples) {
    check_sample(sample, w, h);
    const TransitionDistribution pf = flow_transition(sample, flow, cfg);

    SavedAnchor sa;
    sa.x = sample.anchor.x;
    sa.y = sample.anchor.y;
    sa.weight = flow.magnitude(sa.x, sa.y) * inv_n;
    sa.begin = static_cast<int>(nbrs.size());
    sa.count = static_cast<int>(sample.neighbors.size());

    const size_t uoff = static_cast<size_t>(sa.y) * w + sa.x;
    double ss_u = 0.0;
    for (int d = 0; d < dim; ++d) {
      u[d] = ev[d * plane + uoff];
      ss_u += u[d] * u[d];
    }
    sa.un = std::sqrt(ss_u + kNormFloorEps);

    double total = 0.0;
    for (size_t qi = 0; qi < sample.neighbors.size(); ++qi) {
      const PixelCoord q = sample.neighbors[qi];
      const size_t voff = static_cast<size_t>(q.y) * w + q.x;
      double ss_v = 0.0, dot = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double vd = ev[d * plane + voff];
        ss_v += vd * vd;
        dot += u[d] * vd;
      }
      SavedNeighbor sn;
      sn.x = q.x;
      sn.y = q.y;
      sn.pf = pf.p[qi];
      sn.vn = std::sqrt(ss_v + kNormFloorEps);
      sn.c = dot / (sa.un * sn.vn);
      sn.s = std::clamp(sn.c, cfg.cos_floor, 1.0);
      total += sn.s;
      nbrs.push_back(sn);
    }
    sa.total = total;

    // H = -sum_q pf log(s_q / total)
    double entropy = std::log(total);
    for (int qi = 0; qi < sa.count; ++qi) {
      const SavedNeighbor& sn = nbrs[sa.begin + qi];
      if (sn.pf > 0.0) entropy -= sn.pf * std::log(sn.s);
    }
    loss += sa.weight * entropy;
    anchors.push_back(sa);
  }

  const double cos_floor = cfg.cos_floor;
  auto backward = [anchors = std::move(anchors), nbrs = std::move(nbrs), dim, w,
                   plane, cos_floor](autograd::detail::Node& self) {
    autograd::detail::Node* e = self.parents[0].get();
    if (!e->requires_grad) return;
    e->ensure_grad();
    const double g0 = self.grad[0];
    const double* ev = e->values.data();
    double* eg = e->grad.data();
    for (const SavedAnchor& sa : anchors) {
      const double coef_anchor = g0 * sa.weight;
      if (coef_anchor == 0.0) continue;
      const size_t uoff = static_cast<size_t>(sa.y) * w + sa.x;
      for (int qi = 0; qi < sa.count; ++qi) {
        const SavedNeighbor& sn = nbrs[sa.begin + qi];
        if (sn.c <= cos_floor || sn.c >= 1.0) continue;  // clamped: flat
        const double dh_ds = -sn.pf / sn.s + 1.0 / sa.total;
        const double gc = coef_anchor * dh_ds;
        if (gc == 0.0) continue;
        const size_t voff = static_cast<size_t>(sn.y) * w + sn.x;
        const double inv_unvn = 1.0 / (sa.un * sn.vn);
        const double cu = sn.c / (sa.un * sa.un);
        const double cv = sn.c / (sn.vn * sn.vn);
        for (int d = 0; d < dim; ++d) {
          const double ud = ev[d * plane + uoff];
          const double vd = ev[d * plane + voff];
          eg[d * plane + uoff] += gc * (vd * inv_unvn - cu * ud);
          eg[d * plane + voff] += gc * (ud * inv_unvn - cv * vd);
        }
      }
    }
  };

  return autograd::make_op({1}, {loss}, {embedding}, std::move(backward));
}

std::vector<PixelCoord> sample_anchors(const FlowField& flow,
                                       const KernelConfig& cfg,
                                       std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  // Weighted sampling without replacement via exponential keys: draw
  // log(u)/w per pixel and keep the top-k. Zero-magnitude pixels are skipped
  // before any draw, so they can never be selected.
  struct Keyed {
    double key;
    int x, y;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(static_cast<size_t>(flow.width) * flow.height / 4);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const double mag = flow.magnitude(x, y);
      if (mag <= 0.0) continue;
      const double uu = 1.0 - rng.uniform();  // (0, 1]
      keyed.push_back({std::log(uu) / mag, x, y});
    }
  }
  const size_t k = std::min<size_t>(keyed.size(),
                                    static_cast<size_t>(std::max(cfg.anchors_per_image, 0)));
  auto better = [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  };
  std::partial_sort(keyed.begin(), keyed.begin() + k, keyed.end(), better);
  std::vector<PixelCoord> anchors;
  anchors.reserve(k);
  for (size_t i = 0; i < k; ++i) anchors.push_back({keyed[i].x, keyed[i].y});
  return anchors;
}

NeighborhoodSample build_neighborhood(PixelCoord anchor, int width, int height,
                                      int radius) {
  if (radius < 1)
    throw std::invalid_argument("build_neighborhood: radius must be at least 1");
  if (anchor.x < 0 || anchor.y < 0 || anchor.x >= width || anchor.y >= height)
    throw std::invalid_argument("build_neighborhood: anchor out of bounds");
  NeighborhoodSample sample;
  sample.anchor = anchor;
  const int y0 = std::max(0, anchor.y - radius);
  const int y1 = std::min(height - 1, anchor.y + radius);
  const int x0 = std::max(0, anchor.x - radius);
  const int x1 = std::min(width - 1, anchor.x + radius);
  sample.neighbors.reserve(static_cast<size_t>(y1 - y0 + 1) * (x1 - x0 + 1) - 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (x == anchor.x && y == anchor.y) continue;
      sample.neighbors.push_back({x, y});
    }
  }
  if (sample.neighbors.empty())
    throw std::invalid_argument("build_neighborhood: empty neighborhood");
  return sample;
}

}  // namespace flowseed::flowloss
