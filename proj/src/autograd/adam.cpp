#include "autograd/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "simd/vec_ops.hpp"

namespace flowseed::autograd {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.learning_rate <= 0.0) throw std::invalid_argument("adam: learning_rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  for (const Tensor& p : params_) {
    if (!p.has_grad())
      throw std::logic_error("adam: parameter is missing its gradient");
  }
  ++step_;
  const double bias1_inv = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
  const double bias2_inv = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));
  const auto& t = simd::ops();
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    t.adam_update(p.size(), p.values_mut().data(), p.grad().data(),
                  m_[i].data(), v_[i].data(), cfg_.beta1, cfg_.beta2,
                  bias1_inv, bias2_inv, cfg_.learning_rate, cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::restore(std::int64_t step, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw std::invalid_argument("adam: moment count does not match parameters");
  for (size_t i = 0; i < params_.size(); ++i) {
    if (static_cast<int>(m[i].size()) != params_[i].size() ||
        static_cast<int>(v[i].size()) != params_[i].size())
      throw std::invalid_argument("adam: moment shape does not match parameter");
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace flowseed::autograd
