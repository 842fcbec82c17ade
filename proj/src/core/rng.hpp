#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flowseed {

// Stateless 64-bit finalizer (splitmix64 step). Used to derive independent
// stream seeds from one master seed so that, e.g., anchor sampling in epoch 7
// never shares a stream with augmentation in epoch 7.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  s = mix64(s ^ (0xbf58476d1ce4e5b9ULL * (index + 1)));
  return s;
}

// Named sub-streams of the master seed.
enum class SeedStream : std::uint64_t {
  Corpus = 1,
  NetInit = 2,
  HeadInit = 3,
  Anchors = 4,
  Augment = 5,
  Shuffle = 6,
  LabelPick = 7,
  Projection = 8,
};

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                 std::uint64_t index = 0) {
  return derive_seed(master, static_cast<std::uint64_t>(stream), index);
}

// mt19937_64 with hand-rolled value helpers. The standard specifies the
// engine bit-exactly but not the distributions, so uniform/normal are done
// here to keep runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // standard normal, Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flowseed
