#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/rng.hpp"
#include "io/flo_io.hpp"
#include "synthgen/synthgen.hpp"

using namespace flowseed;
using synthgen::RigidTransform;
using synthgen::SceneSpec;
using synthgen::SyntheticPair;
using synthgen::TransformRanges;

namespace {

// Round trip using the stored fields only: ||f(x) + b(x + f(x))|| with the
// backward field sampled bilinearly at the landing point.
double round_trip_error(const SyntheticPair& pair, int x, int y) {
  const double lx = x + pair.forward_flow.u(x, y);
  const double ly = y + pair.forward_flow.v(x, y);
  const int x0 = static_cast<int>(std::floor(lx));
  const int y0 = static_cast<int>(std::floor(ly));
  const double ax = lx - x0;
  const double ay = ly - y0;
  auto tap_u = [&](int px, int py) { return pair.backward_flow.u(px, py); };
  auto tap_v = [&](int px, int py) { return pair.backward_flow.v(px, py); };
  const int x1 = std::min(x0 + 1, pair.backward_flow.width - 1);
  const int y1 = std::min(y0 + 1, pair.backward_flow.height - 1);
  const double bu = (1 - ax) * (1 - ay) * tap_u(x0, y0) + ax * (1 - ay) * tap_u(x1, y0) +
                    (1 - ax) * ay * tap_u(x0, y1) + ax * ay * tap_u(x1, y1);
  const double bv = (1 - ax) * (1 - ay) * tap_v(x0, y0) + ax * (1 - ay) * tap_v(x1, y0) +
                    (1 - ax) * ay * tap_v(x0, y1) + ax * ay * tap_v(x1, y1);
  return std::hypot(pair.forward_flow.u(x, y) + bu, pair.forward_flow.v(x, y) + bv);
}

SceneSpec simple_scene(int w, int h, RigidTransform fg_t, RigidTransform bg_t) {
  SceneSpec spec;
  spec.background = Image(w, h, 0.25);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) spec.background.at(x, y) += 0.005 * ((x + y) % 7);
  }
  spec.foreground = Image(w, h, 0.9);
  spec.alpha = Image(w, h, 0.0);
  for (int y = h / 3; y < 2 * h / 3; ++y) {
    for (int x = w / 3; x < 2 * w / 3; ++x) spec.alpha.at(x, y) = 1.0;
  }
  spec.fg_transform = fg_t;
  spec.bg_transform = bg_t;
  return spec;
}

}  // namespace

TEST_CASE("sample_transform: degenerate ranges, determinism, empty range") {
  TransformRanges zero{0.0, 0.0, 0.0, 0.0};
  const RigidTransform t = synthgen::sample_transform(zero, {8, 8}, 5);
  CHECK(t.tx == 0.0);
  CHECK(t.ty == 0.0);
  CHECK(t.theta == 0.0);
  CHECK(t.cx == 8.0);

  const RigidTransform a = synthgen::sample_transform(TransformRanges{}, {8, 8}, 99);
  const RigidTransform b = synthgen::sample_transform(TransformRanges{}, {8, 8}, 99);
  CHECK(a.tx == b.tx);
  CHECK(a.ty == b.ty);
  CHECK(a.theta == b.theta);

  TransformRanges bad{2.0, -2.0, 0.0, 0.0};
  CHECK_THROWS_AS(synthgen::sample_transform(bad, {0, 0}, 1), std::invalid_argument);
}

TEST_CASE("sample_transform draws are uniform over the range") {
  TransformRanges r{-5.0, 5.0, 0.0, 0.0};
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    mean += synthgen::sample_transform(r, {0, 0}, 4000 + i).tx;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.2);
}

TEST_CASE("analytic_flow: translation, rotation, identity") {
  RigidTransform shift{3.0, -2.0, 0.0, 10.0, 10.0};
  const FlowField f = synthgen::analytic_flow(shift, 8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(f.u(x, y) == doctest::Approx(3.0).epsilon(1e-15));
      CHECK(f.v(x, y) == doctest::Approx(-2.0).epsilon(1e-15));
    }
  }

  // 90 degrees about the center: pixel at c+(1,0) moves to c+(0,1).
  RigidTransform rot{0.0, 0.0, 1.5707963267948966, 4.0, 4.0};
  const FlowField fr = synthgen::analytic_flow(rot, 9, 9);
  CHECK(fr.u(5, 4) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fr.v(5, 4) == doctest::Approx(1.0).epsilon(1e-12));

  RigidTransform ident{0.0, 0.0, 0.0, 4.0, 4.0};
  const FlowField fi = synthgen::analytic_flow(ident, 6, 6);
  for (double v : fi.uv) CHECK(v == 0.0);
}

TEST_CASE("analytic_flow is linear in the translation for fixed rotation") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const double theta = rng.uniform(-0.3, 0.3);
    RigidTransform t1{rng.uniform(-4, 4), rng.uniform(-4, 4), theta, 8, 8};
    RigidTransform t2 = t1;
    t2.tx += 1.5;
    t2.ty -= 2.5;
    const FlowField f1 = synthgen::analytic_flow(t1, 6, 6);
    const FlowField f2 = synthgen::analytic_flow(t2, 6, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        CHECK(f2.u(x, y) - f1.u(x, y) == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(f2.v(x, y) - f1.v(x, y) == doctest::Approx(-2.5).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("compose_flow selects per pixel") {
  FlowField fg(4, 4), bg(4, 4);
  for (double& v : fg.uv) v = 2.0;
  for (double& v : bg.uv) v = -1.0;

  Image zeros(4, 4, 0.0), ones(4, 4, 1.0), checker(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) checker.at(x, y) = (x + y) % 2;
  }

  CHECK(synthgen::compose_flow(fg, bg, zeros).uv == bg.uv);
  CHECK(synthgen::compose_flow(fg, bg, ones).uv == fg.uv);
  const FlowField mix = synthgen::compose_flow(fg, bg, checker);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(mix.u(x, y) == (checker.at(x, y) > 0.5 ? 2.0 : -1.0));
    }
  }
}

TEST_CASE("warp_bilinear: identity, integer shift, constant image") {
  Rng rng(22);
  Image img(8, 8);
  for (double& v : img.v) v = rng.uniform(0.0, 1.0);

  FlowField zero(8, 8);
  CHECK(synthgen::warp_bilinear(img, zero).v == img.v);

  FlowField shift(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) shift.u(x, y) = 1.0;
  }
  const Image shifted = synthgen::warp_bilinear(img, shift);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 7; ++x) {
      CHECK(shifted.at(x, y) == doctest::Approx(img.at(x + 1, y)).epsilon(1e-15));
    }
  }

  Image flat(8, 8, 0.42);
  FlowField wild(8, 8);
  for (double& v : wild.uv) v = rng.uniform(-20.0, 20.0);
  for (double v : synthgen::warp_bilinear(flat, wild).v) {
    CHECK(v == doctest::Approx(0.42).epsilon(1e-15));
  }
}

TEST_CASE("render_pair: identity transforms give equal frames and empty occlusion") {
  RigidTransform ident{0, 0, 0, 16, 16};
  const SceneSpec spec = simple_scene(32, 32, ident, ident);
  const SyntheticPair pair = synthgen::render_pair(spec);
  for (size_t i = 0; i < pair.frame1.size(); ++i) {
    CHECK(pair.frame1.v[i] == doctest::Approx(pair.frame2.v[i]).epsilon(1e-12));
  }
  for (double v : pair.forward_flow.uv) CHECK(v == 0.0);
  for (double v : pair.occlusion_mask.v) CHECK(v == 0.0);
}

TEST_CASE("render_pair: translated foreground, static background") {
  RigidTransform ident{0, 0, 0, 16, 16};
  RigidTransform fg_t{4.0, 0.0, 0.0, 16.0, 16.0};
  const SceneSpec spec = simple_scene(32, 32, fg_t, ident);
  const SyntheticPair pair = synthgen::render_pair(spec);

  // flow is (4,0) on the fg mask and (0,0) elsewhere
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (spec.alpha.at(x, y) > 0.5) {
        CHECK(pair.forward_flow.u(x, y) == 4.0);
        CHECK(pair.forward_flow.v(x, y) == 0.0);
      } else {
        CHECK(pair.forward_flow.u(x, y) == 0.0);
      }
    }
  }

  // background pixels covered by the moved foreground: a band of width 4
  // at the foreground edge the motion runs away from
  int band = 0, outside = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const bool in_band = spec.alpha.at(x, y) <= 0.5 && x - 4 >= 0 &&
                           spec.alpha.at(x - 4, y) > 0.5;
      if (in_band) {
        ++band;
        CHECK(pair.occlusion_mask.at(x, y) == 1.0);
      }
      if (pair.occlusion_mask.at(x, y) > 0.5 && !in_band) ++outside;
    }
  }
  CHECK(band > 0);
  CHECK(outside == 0);  // integer translation: no interpolation straddle
}

TEST_CASE("render_pair: forward/backward round trip and warp reconstruction") {
  Rng rng(23);
  int checked = 0;
  double err_sum = 0.0;
  size_t err_count = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const auto specs = synthgen::shapes_corpus(2, 64, 64, 7000 + trial);
    for (const SceneSpec& spec : specs) {
      const SyntheticPair pair = synthgen::render_pair(spec);
      const Image recon = synthgen::warp_bilinear(pair.frame2, pair.forward_flow);
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (pair.occlusion_mask.at(x, y) > 0.5) continue;
          CHECK(round_trip_error(pair, x, y) < 1e-6);
          err_sum += std::abs(recon.at(x, y) - pair.frame1.at(x, y));
          ++err_count;
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 0);
  CHECK(err_sum / err_count < 2.0 / 255.0);
}

TEST_CASE("shapes_corpus: determinism, alpha range, coverage bounds") {
  const auto a = synthgen::shapes_corpus(10, 48, 48, 31);
  const auto b = synthgen::shapes_corpus(10, 48, 48, 31);
  REQUIRE(a.size() == 10);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].background.v == b[i].background.v);
    CHECK(a[i].alpha.v == b[i].alpha.v);
    CHECK(a[i].fg_transform.tx == b[i].fg_transform.tx);
  }
  for (const SceneSpec& spec : a) {
    size_t fg = 0;
    for (double v : spec.alpha.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      fg += v > 0.5;
    }
    const double frac = static_cast<double>(fg) / spec.alpha.size();
    CHECK(frac >= 0.02);
    CHECK(frac <= 0.30);
  }
  // half the corpus keeps the background static
  int moving = 0;
  for (const SceneSpec& spec : a) {
    if (spec.bg_transform.tx != 0.0 || spec.bg_transform.theta != 0.0) ++moving;
  }
  CHECK(moving == 5);
}

TEST_CASE("generate_dataset: layout, determinism, flo round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "flowseed_test_dataset";
  fs::remove_all(dir);

  const auto specs = synthgen::shapes_corpus(3, 32, 32, 77);
  synthgen::generate_dataset(specs, dir.string());

  CHECK(fs::exists(dir / "manifest.txt"));
  for (int i = 0; i < 3; ++i) {
    const fs::path sub = dir / ("pair_000" + std::to_string(i));
    for (const char* name : {"frame1.pgm", "frame2.pgm", "flow_fwd.flo",
                             "flow_bwd.flo", "mask.pgm", "occlusion.pgm"}) {
      CHECK(fs::exists(sub / name));
    }
  }

  // read-back flow equals the in-memory flow at float32 precision
  const SyntheticPair pair0 = synthgen::render_pair(specs[0]);
  const FlowField readback = io::flo_read((dir / "pair_0000" / "flow_fwd.flo").string());
  REQUIRE(readback.uv.size() == pair0.forward_flow.uv.size());
  for (size_t i = 0; i < readback.uv.size(); ++i) {
    CHECK(readback.uv[i] == static_cast<double>(static_cast<float>(pair0.forward_flow.uv[i])));
  }

  // regeneration is byte-identical
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string once = slurp(dir / "pair_0001" / "flow_fwd.flo");
  synthgen::generate_dataset(specs, dir.string());
  CHECK(slurp(dir / "pair_0001" / "flow_fwd.flo") == once);

  fs::remove_all(dir);
}
