#include "synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "core/rng.hpp"
#include "io/flo_io.hpp"
#include "io/netpbm.hpp"

namespace flowseed::synthgen {

namespace fs = std::filesystem;

Vec2 RigidTransform::apply(Vec2 p) const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double dx = p.x - cx;
  const double dy = p.y - cy;
  return {c * dx - s * dy + cx + tx, s * dx + c * dy + cy + ty};
}

RigidTransform RigidTransform::inverse() const {
  // y = R(x - c) + c + t  =>  x = R^-1 (y - c - t) + c
  const double c = std::cos(-theta);
  const double s = std::sin(-theta);
  RigidTransform inv;
  inv.theta = -theta;
  inv.cx = cx;
  inv.cy = cy;
  inv.tx = -(c * tx - s * ty);
  inv.ty = -(s * tx + c * ty);
  return inv;
}

RigidTransform sample_transform(const TransformRanges& ranges, Vec2 center,
                                std::uint64_t rng_seed) {
  if (ranges.t_min > ranges.t_max || ranges.rot_min > ranges.rot_max)
    throw std::invalid_argument("sample_transform: empty range");
  if (!std::isfinite(ranges.t_min) || !std::isfinite(ranges.t_max) ||
      !std::isfinite(ranges.rot_min) || !std::isfinite(ranges.rot_max))
    throw std::invalid_argument("sample_transform: bounds must be finite");
  Rng rng(rng_seed);
  RigidTransform t;
  t.tx = rng.uniform(ranges.t_min, ranges.t_max);
  t.ty = rng.uniform(ranges.t_min, ranges.t_max);
  t.theta = rng.uniform(ranges.rot_min, ranges.rot_max);
  t.cx = center.x;
  t.cy = center.y;
  return t;
}

FlowField analytic_flow(const RigidTransform& t, int width, int height) {
  FlowField flow(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 moved = t.apply({static_cast<double>(x), static_cast<double>(y)});
      flow.u(x, y) = moved.x - x;
      flow.v(x, y) = moved.y - y;
    }
  }
  return flow;
}

FlowField compose_flow(const FlowField& fg_flow, const FlowField& bg_flow,
                       const Image& alpha) {
  if (fg_flow.width != bg_flow.width || fg_flow.height != bg_flow.height ||
      alpha.width != fg_flow.width || alpha.height != fg_flow.height)
    throw std::invalid_argument("compose_flow: extents differ");
  FlowField out(fg_flow.width, fg_flow.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const FlowField& pick = alpha.at(x, y) > 0.5 ? fg_flow : bg_flow;
      out.u(x, y) = pick.u(x, y);
      out.v(x, y) = pick.v(x, y);
    }
  }
  return out;
}

Image warp_bilinear(const Image& image, const FlowField& flow) {
  if (image.width != flow.width || image.height != flow.height)
    throw std::invalid_argument("warp_bilinear: extents differ");
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.at(x, y) = bilinear_sample(image, x + flow.u(x, y), y + flow.v(x, y),
                                     Border::Clamp);
    }
  }
  return out;
}

SyntheticPair render_pair(const SceneSpec& spec) {
  const int w = spec.background.width;
  const int h = spec.background.height;
  if (spec.foreground.width != w || spec.foreground.height != h ||
      spec.alpha.width != w || spec.alpha.height != h)
    throw std::invalid_argument("render_pair: layer extents differ");
  for (double a : spec.alpha.v) {
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("render_pair: alpha outside [0, 1]");
  }

  SyntheticPair pair;
  pair.frame1 = Image(w, h);
  pair.frame2 = Image(w, h);
  pair.fg_mask_frame1 = Image(w, h);
  pair.occlusion_mask = Image(w, h);
  pair.backward_flow = FlowField(w, h);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = spec.alpha.at(x, y);
      pair.frame1.at(x, y) =
          a * spec.foreground.at(x, y) + (1.0 - a) * spec.background.at(x, y);
      pair.fg_mask_frame1.at(x, y) = a > 0.5 ? 1.0 : 0.0;
    }
  }

  pair.forward_flow = compose_flow(analytic_flow(spec.fg_transform, w, h),
                                   analytic_flow(spec.bg_transform, w, h),
                                   spec.alpha);

  const RigidTransform inv_fg = spec.fg_transform.inverse();
  const RigidTransform inv_bg = spec.bg_transform.inverse();

  double max_alpha2 = 0.0;
  Image fg_mask_frame2(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      const Vec2 src_fg = inv_fg.apply(p);
      const Vec2 src_bg = inv_bg.apply(p);
      const double a2 = bilinear_sample(spec.alpha, src_fg.x, src_fg.y, Border::Zero);
      const double fg2 = bilinear_sample(spec.foreground, src_fg.x, src_fg.y, Border::Zero);
      const double bg2 = bilinear_sample(spec.background, src_bg.x, src_bg.y, Border::Clamp);
      pair.frame2.at(x, y) = a2 * fg2 + (1.0 - a2) * bg2;
      max_alpha2 = std::max(max_alpha2, a2);
      fg_mask_frame2.at(x, y) = a2 > 0.5 ? 1.0 : 0.0;
      if (a2 > 0.5) {
        pair.backward_flow.u(x, y) = src_fg.x - p.x;
        pair.backward_flow.v(x, y) = src_fg.y - p.y;
      } else {
        pair.backward_flow.u(x, y) = src_bg.x - p.x;
        pair.backward_flow.v(x, y) = src_bg.y - p.y;
      }
    }
  }

  double max_alpha1 = 0.0;
  for (double a : spec.alpha.v) max_alpha1 = std::max(max_alpha1, a);
  if (max_alpha1 > 0.5 && max_alpha2 <= 0.5) {
    std::fprintf(stderr,
                 "render_pair: warning: foreground left the frame entirely\n");
  }

  // A frame-1 pixel is occluded when its landing point exits the frame or
  // when any nonzero-weight bilinear support pixel of the landing belongs to
  // the other layer. Off this mask, sampling the stored backward field at the
  // landing point interpolates one affine layer flow, so the forward/backward
  // round trip is exact.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fg1 = pair.fg_mask_frame1.at(x, y) > 0.5;
      const double lx = x + pair.forward_flow.u(x, y);
      const double ly = y + pair.forward_flow.v(x, y);
      bool occluded;
      if (lx < 0.0 || ly < 0.0 || lx > w - 1.0 || ly > h - 1.0) {
        occluded = true;
      } else {
        occluded = false;
        const int x0 = static_cast<int>(std::floor(lx));
        const int y0 = static_cast<int>(std::floor(ly));
        const double ax = lx - x0;
        const double ay = ly - y0;
        const double wts[4] = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay),
                               (1.0 - ax) * ay, ax * ay};
        const int px[4] = {x0, x0 + 1, x0, x0 + 1};
        const int py[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int t = 0; t < 4; ++t) {
          if (wts[t] <= 1e-12) continue;
          if ((fg_mask_frame2.at(px[t], py[t]) > 0.5) != fg1) {
            occluded = true;
            break;
          }
        }
      }
      pair.occlusion_mask.at(x, y) = occluded ? 1.0 : 0.0;
    }
  }

  return pair;
}

// ---------------------------------------------------------------------------
// procedural shapes corpus

namespace {

// Bilinearly upsampled random grid, values in [0, 1].
Image value_noise(int w, int h, double cell, Rng& rng) {
  const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
  const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
  std::vector<double> grid(static_cast<size_t>(gw) * gh);
  for (double& g : grid) g = rng.uniform();
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const double gy = y / cell;
    const int y0 = static_cast<int>(gy);
    const double ay = gy - y0;
    for (int x = 0; x < w; ++x) {
      const double gx = x / cell;
      const int x0 = static_cast<int>(gx);
      const double ax = gx - x0;
      const double v00 = grid[static_cast<size_t>(y0) * gw + x0];
      const double v10 = grid[static_cast<size_t>(y0) * gw + x0 + 1];
      const double v01 = grid[static_cast<size_t>(y0 + 1) * gw + x0];
      const double v11 = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
      const double top = v00 + ax * (v10 - v00);
      const double bot = v01 + ax * (v11 - v01);
      out.at(x, y) = top + ay * (bot - top);
    }
  }
  return out;
}

// alpha(d) = clamp(halfwidth + 0.5 - d, 0, 1): solid inside, 1px linear ramp.
void stamp_disk(Image& alpha, Vec2 p, double halfwidth) {
  const int r = static_cast<int>(std::ceil(halfwidth + 1.0));
  const int x0 = std::max(0, static_cast<int>(p.x) - r);
  const int x1 = std::min(alpha.width - 1, static_cast<int>(p.x) + r);
  const int y0 = std::max(0, static_cast<int>(p.y) - r);
  const int y1 = std::min(alpha.height - 1, static_cast<int>(p.y) + r);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - p.x, y - p.y);
      const double a = std::clamp(halfwidth + 0.5 - d, 0.0, 1.0);
      if (a > alpha.at(x, y)) alpha.at(x, y) = a;
    }
  }
}

void draw_stroke(Image& alpha, Rng& rng) {
  const double scale = std::min(alpha.width, alpha.height);
  const double margin = 0.12 * scale;
  const Vec2 p0{rng.uniform(margin, alpha.width - margin),
                rng.uniform(margin, alpha.height - margin)};
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double len = rng.uniform(0.35, 0.75) * scale;
  Vec2 p2{p0.x + len * std::cos(angle), p0.y + len * std::sin(angle)};
  p2.x = std::clamp(p2.x, 2.0, alpha.width - 3.0);
  p2.y = std::clamp(p2.y, 2.0, alpha.height - 3.0);
  const Vec2 mid = 0.5 * (p0 + p2);
  const Vec2 dir = p2 - p0;
  const double bend = rng.uniform(-0.3, 0.3);
  const Vec2 ctrl{mid.x - bend * dir.y, mid.y + bend * dir.x};
  const double halfwidth = rng.uniform(1.5, 3.2);

  const int steps = std::max(16, static_cast<int>(2.0 * len));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const double u = 1.0 - t;
    const Vec2 b = (u * u) * p0 + (2.0 * u * t) * ctrl + (t * t) * p2;
    stamp_disk(alpha, b, halfwidth);
  }
}

void draw_ellipse(Image& alpha, Rng& rng) {
  const double scale = std::min(alpha.width, alpha.height);
  const double margin = 0.15 * scale;
  const Vec2 c{rng.uniform(margin, alpha.width - margin),
               rng.uniform(margin, alpha.height - margin)};
  const double a = rng.uniform(0.07, 0.18) * scale;
  const double b = std::max(1.8, rng.uniform(0.35, 0.8) * a);
  const double angle = rng.uniform(0.0, 3.141592653589793);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double edge = std::min(a, b);
  const int r = static_cast<int>(std::ceil(std::max(a, b))) + 2;
  const int x0 = std::max(0, static_cast<int>(c.x) - r);
  const int x1 = std::min(alpha.width - 1, static_cast<int>(c.x) + r);
  const int y0 = std::max(0, static_cast<int>(c.y) - r);
  const int y1 = std::min(alpha.height - 1, static_cast<int>(c.y) + r);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x, dy = y - c.y;
      const double ex = (ca * dx + sa * dy) / a;
      const double ey = (-sa * dx + ca * dy) / b;
      const double q = std::sqrt(ex * ex + ey * ey);
      const double v = std::clamp(0.5 + (1.0 - q) * edge, 0.0, 1.0);
      if (v > alpha.at(x, y)) alpha.at(x, y) = v;
    }
  }
}

double foreground_fraction(const Image& alpha) {
  size_t fg = 0;
  for (double a : alpha.v) fg += a > 0.5 ? 1 : 0;
  return static_cast<double>(fg) / alpha.size();
}

}  // namespace

std::vector<SceneSpec> shapes_corpus(int count, int width, int height,
                                     std::uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("shapes_corpus: count must be positive");
  std::vector<SceneSpec> specs;
  specs.reserve(count);
  const Vec2 center{(width - 1) / 2.0, (height - 1) / 2.0};

  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.seed = derive_seed(seed, SeedStream::Corpus, static_cast<std::uint64_t>(i));
    Rng rng(spec.seed);

    const Image coarse = value_noise(width, height, std::max(8.0, width / 4.0), rng);
    const Image fine = value_noise(width, height, std::max(3.0, width / 16.0), rng);
    spec.background = Image(width, height);
    for (size_t k = 0; k < spec.background.size(); ++k) {
      spec.background.v[k] = std::clamp(
          0.45 + 0.30 * (coarse.v[k] - 0.5) + 0.10 * (fine.v[k] - 0.5), 0.05, 0.95);
    }

    // Redraw until coverage lands in [2%, 30%]; draws come from the same
    // stream so the spec stays a pure function of its seed.
    for (int attempt = 0;; ++attempt) {
      spec.alpha = Image(width, height, 0.0);
      const int n_strokes = 1 + static_cast<int>(rng.uniform_index(3));
      const int n_ellipses = static_cast<int>(rng.uniform_index(2));
      for (int s = 0; s < n_strokes; ++s) draw_stroke(spec.alpha, rng);
      for (int e = 0; e < n_ellipses; ++e) draw_ellipse(spec.alpha, rng);
      const double frac = foreground_fraction(spec.alpha);
      if (frac >= 0.02 && frac <= 0.30) break;
      if (attempt >= 200)
        throw std::runtime_error("shapes_corpus: could not hit coverage target");
    }

    // Intensity polarity varies across the corpus: sometimes darker than the
    // background, sometimes brighter.
    const double intensity =
        rng.uniform() < 0.5 ? rng.uniform(0.02, 0.22) : rng.uniform(0.75, 0.97);
    spec.foreground = Image(width, height, intensity);

    spec.fg_transform =
        sample_transform(TransformRanges{}, center, derive_seed(spec.seed, 101));
    if (i % 2 == 0) {
      spec.bg_transform = RigidTransform{0.0, 0.0, 0.0, center.x, center.y};
    } else {
      TransformRanges small;
      small.t_min = -2.0;
      small.t_max = 2.0;
      small.rot_min = -0.03490658503988659;  // -2 degrees
      small.rot_max = 0.03490658503988659;
      spec.bg_transform = sample_transform(small, center, derive_seed(spec.seed, 102));
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

void generate_dataset(const std::vector<SceneSpec>& specs,
                      const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("generate_dataset: cannot create " + out_dir + ": " +
                             ec.message());

  std::string manifest;
  char id[32];
  for (size_t i = 0; i < specs.size(); ++i) {
    std::snprintf(id, sizeof id, "pair_%04zu", i);
    const fs::path dir = fs::path(out_dir) / id;
    fs::create_directories(dir, ec);
    if (ec)
      throw std::runtime_error("generate_dataset: cannot create " + dir.string() +
                               ": " + ec.message());
    const SyntheticPair pair = render_pair(specs[i]);
    io::pgm_write(pair.frame1, (dir / "frame1.pgm").string());
    io::pgm_write(pair.frame2, (dir / "frame2.pgm").string());
    io::flo_write(pair.forward_flow, (dir / "flow_fwd.flo").string());
    io::flo_write(pair.backward_flow, (dir / "flow_bwd.flo").string());
    io::pgm_write(pair.fg_mask_frame1, (dir / "mask.pgm").string());
    io::pgm_write(pair.occlusion_mask, (dir / "occlusion.pgm").string());
    manifest += id;
    manifest += " seed=" + std::to_string(specs[i].seed) + "\n";
  }

  const fs::path manifest_path = fs::path(out_dir) / "manifest.txt";
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("generate_dataset: cannot write " + manifest_path.string());
  out << manifest;
  if (!out.flush())
    throw std::runtime_error("generate_dataset: short write to " + manifest_path.string());
}

}  // namespace flowseed::synthgen
