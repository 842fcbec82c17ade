#include "io/flo_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace flowseed::io {

namespace {

constexpr float kFloMagic = 202021.25f;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::uint32_t to_le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap32(v);
}

void write_u32(std::FILE* f, std::uint32_t v, const std::string& path) {
  v = to_le32(v);
  if (std::fwrite(&v, 4, 1, f) != 1)
    throw std::runtime_error("flo_write: short write to " + path);
}

void write_f32(std::FILE* f, float v, const std::string& path) {
  write_u32(f, std::bit_cast<std::uint32_t>(v), path);
}

bool read_u32(std::FILE* f, std::uint32_t& v) {
  if (std::fread(&v, 4, 1, f) != 1) return false;
  v = to_le32(v);
  return true;
}

}  // namespace

FlowField flo_read(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("flo_read: could not open " + path);

  std::uint32_t magic_bits, w_bits, h_bits;
  if (!read_u32(f.get(), magic_bits) || !read_u32(f.get(), w_bits) ||
      !read_u32(f.get(), h_bits))
    throw std::runtime_error("flo_read: truncated header in " + path);
  if (std::bit_cast<float>(magic_bits) != kFloMagic)
    throw std::runtime_error("flo_read: not a flow file: " + path);
  const int width = static_cast<std::int32_t>(w_bits);
  const int height = static_cast<std::int32_t>(h_bits);
  if (width < 1 || height < 1 || width > 99999 || height > 99999)
    throw std::runtime_error("flo_read: illegal extents in " + path);

  FlowField flow(width, height);
  std::vector<std::uint32_t> row(static_cast<size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    const size_t got = std::fread(row.data(), 4, row.size(), f.get());
    if (got != row.size()) {
      const int x = static_cast<int>(got / 2);
      throw std::runtime_error("flo_read: short read at pair (" +
                               std::to_string(x) + "," + std::to_string(y) +
                               ") in " + path);
    }
    for (int x = 0; x < width; ++x) {
      flow.u(x, y) = std::bit_cast<float>(to_le32(row[2 * x]));
      flow.v(x, y) = std::bit_cast<float>(to_le32(row[2 * x + 1]));
    }
  }
  return flow;
}

void flo_write(const FlowField& flow, const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("flo_write: could not open " + path);
  write_f32(f.get(), kFloMagic, path);
  write_u32(f.get(), static_cast<std::uint32_t>(flow.width), path);
  write_u32(f.get(), static_cast<std::uint32_t>(flow.height), path);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      write_f32(f.get(), static_cast<float>(flow.u(x, y)), path);
      write_f32(f.get(), static_cast<float>(flow.v(x, y)), path);
    }
  }
  if (std::fflush(f.get()) != 0)
    throw std::runtime_error("flo_write: flush failed for " + path);
}

}  // namespace flowseed::io
