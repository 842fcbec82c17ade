#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autograd/tensor.hpp"

namespace flowseed::trainer {

// Versioned binary container. Layout, all integers 64-bit little-endian and
// all values little-endian doubles:
//   magic "FSEED001"
//   u64 parameter count
//   per parameter: u64 name length, UTF-8 name, u64 rank, u64 extents[rank],
//                  f64 values[prod(extents)]
//   u64 has_adam (0 or 1); when 1: u64 step, f64 learning_rate, f64 beta1,
//                  f64 beta2, f64 eps, then per parameter f64 m[] and f64 v[]
//                  in the same order and shapes as the parameters.
struct CheckpointData {
  std::vector<std::pair<std::string, autograd::Tensor>> params;
  bool has_adam = false;
  std::int64_t adam_step = 0;
  double learning_rate = 0.0, beta1 = 0.0, beta2 = 0.0, eps = 0.0;
  std::vector<std::vector<double>> adam_m, adam_v;
};

void save_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace flowseed::trainer
