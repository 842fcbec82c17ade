#include "trainer/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace flowseed::trainer {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'E', 'E', 'D', '0', '0', '1'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::uint64_t to_le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap64(v);
}

void put_u64(std::FILE* f, std::uint64_t v, const std::string& path) {
  v = to_le64(v);
  if (std::fwrite(&v, 8, 1, f) != 1)
    throw std::runtime_error("checkpoint: short write to " + path);
}

void put_f64(std::FILE* f, double v, const std::string& path) {
  put_u64(f, std::bit_cast<std::uint64_t>(v), path);
}

void put_f64s(std::FILE* f, const std::vector<double>& v, const std::string& path) {
  for (double x : v) put_f64(f, x, path);
}

std::uint64_t get_u64(std::FILE* f, const std::string& path) {
  std::uint64_t v;
  if (std::fread(&v, 8, 1, f) != 1)
    throw std::runtime_error("checkpoint: truncated file " + path);
  return to_le64(v);
}

double get_f64(std::FILE* f, const std::string& path) {
  return std::bit_cast<double>(get_u64(f, path));
}

std::vector<double> get_f64s(std::FILE* f, size_t n, const std::string& path) {
  std::vector<double> out(n);
  for (double& x : out) x = get_f64(f, path);
  return out;
}

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("checkpoint: could not open " + path);
  if (std::fwrite(kMagic, 1, 8, f.get()) != 8)
    throw std::runtime_error("checkpoint: short write to " + path);
  put_u64(f.get(), data.params.size(), path);
  for (const auto& [name, tensor] : data.params) {
    put_u64(f.get(), name.size(), path);
    if (!name.empty() &&
        std::fwrite(name.data(), 1, name.size(), f.get()) != name.size())
      throw std::runtime_error("checkpoint: short write to " + path);
    const auto& shape = tensor.shape();
    put_u64(f.get(), shape.size(), path);
    for (int e : shape) put_u64(f.get(), static_cast<std::uint64_t>(e), path);
    put_f64s(f.get(), tensor.values(), path);
  }
  put_u64(f.get(), data.has_adam ? 1 : 0, path);
  if (data.has_adam) {
    if (data.adam_m.size() != data.params.size() ||
        data.adam_v.size() != data.params.size())
      throw std::invalid_argument("checkpoint: adam moments do not match parameters");
    put_u64(f.get(), static_cast<std::uint64_t>(data.adam_step), path);
    put_f64(f.get(), data.learning_rate, path);
    put_f64(f.get(), data.beta1, path);
    put_f64(f.get(), data.beta2, path);
    put_f64(f.get(), data.eps, path);
    for (size_t i = 0; i < data.params.size(); ++i) {
      put_f64s(f.get(), data.adam_m[i], path);
      put_f64s(f.get(), data.adam_v[i], path);
    }
  }
  if (std::fflush(f.get()) != 0)
    throw std::runtime_error("checkpoint: flush failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("checkpoint: could not open " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f.get()) != 8)
    throw std::runtime_error("checkpoint: truncated file " + path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path +
                             " (expected version FSEED001)");

  CheckpointData data;
  const std::uint64_t count = get_u64(f.get(), path);
  if (count > 1'000'000)
    throw std::runtime_error("checkpoint: implausible parameter count in " + path);
  data.params.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(f.get(), path);
    if (name_len > 4096)
      throw std::runtime_error("checkpoint: implausible name length in " + path);
    std::string name(name_len, '\0');
    if (name_len != 0 &&
        std::fread(name.data(), 1, name_len, f.get()) != name_len)
      throw std::runtime_error("checkpoint: truncated file " + path);
    const std::uint64_t rank = get_u64(f.get(), path);
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank in " + path);
    std::vector<int> shape(rank);
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t e = get_u64(f.get(), path);
      if (e > (1u << 24))
        throw std::runtime_error("checkpoint: implausible extent in " + path);
      shape[d] = static_cast<int>(e);
      n *= e;
    }
    std::vector<double> values = get_f64s(f.get(), n, path);
    data.params.emplace_back(
        std::move(name),
        autograd::Tensor::from_values(std::move(shape), std::move(values)));
  }
  data.has_adam = get_u64(f.get(), path) != 0;
  if (data.has_adam) {
    data.adam_step = static_cast<std::int64_t>(get_u64(f.get(), path));
    data.learning_rate = get_f64(f.get(), path);
    data.beta1 = get_f64(f.get(), path);
    data.beta2 = get_f64(f.get(), path);
    data.eps = get_f64(f.get(), path);
    for (const auto& [name, tensor] : data.params) {
      data.adam_m.push_back(get_f64s(f.get(), tensor.values().size(), path));
      data.adam_v.push_back(get_f64s(f.get(), tensor.values().size(), path));
    }
  }
  if (std::fgetc(f.get()) != EOF)
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return data;
}

}  // namespace flowseed::trainer
