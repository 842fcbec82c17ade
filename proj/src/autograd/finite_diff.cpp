#include "autograd/finite_diff.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace flowseed::autograd {

namespace {

double eval_scalar(const std::function<Tensor(const Tensor&)>& f,
                   const Tensor& x) {
  const double v = f(x).item();
  if (!std::isfinite(v))
    throw std::runtime_error("finite_difference_check: f produced a non-finite value");
  return v;
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h,
                               std::span<const int> coords) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");

  Tensor var = Tensor::from_values(x.shape(), x.values(), true);
  Tensor loss = f(var);
  if (loss.size() != 1)
    throw std::invalid_argument("finite_difference_check: f must return a scalar");
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("finite_difference_check: f produced a non-finite value");
  loss.backward();
  std::vector<double> analytic(x.size(), 0.0);
  if (var.has_grad()) analytic = var.grad();

  double worst = 0.0;
  NoGradGuard no_grad;
  std::vector<double> bumped = x.values();
  for (int i : coords) {
    if (i < 0 || i >= x.size())
      throw std::invalid_argument("finite_difference_check: coordinate out of range");
    const double orig = bumped[i];
    bumped[i] = orig + h;
    const double up = eval_scalar(f, Tensor::from_values(x.shape(), bumped));
    bumped[i] = orig - h;
    const double dn = eval_scalar(f, Tensor::from_values(x.shape(), bumped));
    bumped[i] = orig;
    const double fd = (up - dn) / (2.0 * h);
    const double ga = analytic[i];
    const double err = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h) {
  std::vector<int> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  return finite_difference_check(f, x, h, all);
}

double finite_difference_check_param(const std::function<Tensor()>& loss_fn,
                                     Tensor param, double h,
                                     std::span<const int> coords) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
  if (!param.requires_grad() || !param.is_leaf())
    throw std::invalid_argument(
        "finite_difference_check: param must be a requires_grad leaf");

  param.zero_grad();
  Tensor loss = loss_fn();
  if (loss.size() != 1)
    throw std::invalid_argument("finite_difference_check: loss must be scalar");
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("finite_difference_check: non-finite loss");
  loss.backward();
  std::vector<double> analytic(param.size(), 0.0);
  if (param.has_grad()) analytic = param.grad();
  param.zero_grad();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (int i : coords) {
    if (i < 0 || i >= param.size())
      throw std::invalid_argument("finite_difference_check: coordinate out of range");
    const double orig = param.values_mut()[i];
    param.values_mut()[i] = orig + h;
    const double up = loss_fn().item();
    param.values_mut()[i] = orig - h;
    const double dn = loss_fn().item();
    param.values_mut()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw std::runtime_error("finite_difference_check: non-finite loss");
    const double fd = (up - dn) / (2.0 * h);
    const double ga = analytic[i];
    const double err = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace flowseed::autograd
