#include "io/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace flowseed::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

// Reads the next header token, skipping whitespace and # comments.
std::string next_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int c;
  while ((c = std::fgetc(f)) != EOF) {
    if (c == '#') {
      while ((c = std::fgetc(f)) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty())
    throw std::runtime_error("pgm_read: truncated header in " + path);
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    const int v = std::stoi(tok);
    if (v < 1 || v > 99999) throw std::out_of_range("extent");
    return v;
  } catch (...) {
    throw std::runtime_error("pgm_read: bad header value '" + tok + "' in " + path);
  }
}

std::uint8_t quantize(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace

Image pgm_read(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("pgm_read: could not open " + path);
  const std::string magic = next_token(f.get(), path);
  if (magic == "P2" || magic == "P3")
    throw std::runtime_error("pgm_read: ASCII netpbm not supported: " + path);
  if (magic != "P5")
    throw std::runtime_error("pgm_read: not a binary PGM: " + path);
  const int width = parse_dim(next_token(f.get(), path), path);
  const int height = parse_dim(next_token(f.get(), path), path);
  const int maxval = parse_dim(next_token(f.get(), path), path);
  if (maxval != 255)
    throw std::runtime_error("pgm_read: only maxval 255 supported: " + path);

  std::vector<std::uint8_t> raw(static_cast<size_t>(width) * height);
  if (std::fread(raw.data(), 1, raw.size(), f.get()) != raw.size())
    throw std::runtime_error("pgm_read: truncated pixel data in " + path);

  Image img(width, height);
  for (size_t i = 0; i < raw.size(); ++i) img.v[i] = raw[i] / 255.0;
  return img;
}

void pgm_write(const Image& img, const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("pgm_write: could not open " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> raw(img.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize(img.v[i]);
  if (std::fwrite(raw.data(), 1, raw.size(), f.get()) != raw.size())
    throw std::runtime_error("pgm_write: short write to " + path);
  if (std::fflush(f.get()) != 0)
    throw std::runtime_error("pgm_write: flush failed for " + path);
}

void ppm_write(const RgbImage& img, const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("ppm_write: could not open " + path);
  std::fprintf(f.get(), "P6\n%d %d\n255\n", img.width, img.height);
  if (std::fwrite(img.rgb.data(), 1, img.rgb.size(), f.get()) != img.rgb.size())
    throw std::runtime_error("ppm_write: short write to " + path);
  if (std::fflush(f.get()) != 0)
    throw std::runtime_error("ppm_write: flush failed for " + path);
}

}  // namespace flowseed::io
