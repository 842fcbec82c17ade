#pragma once

#include <cstdint>
#include <vector>

#include "autograd/tensor.hpp"

namespace flowseed::autograd {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed parameter set. Moment arrays are
// sized to their parameters at construction and the step counter advances by
// exactly one per step().
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  // One update. Every parameter must carry a gradient (throws otherwise);
  // gradients are left in place for the caller to clear.
  void step();

  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Serialized as part of the checkpoint container when saving mid-training.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace flowseed::autograd
