#pragma once

#include <functional>
#include <span>

#include "autograd/tensor.hpp"

namespace flowseed::autograd {

// Compares the analytic gradient of f at x against central differences.
// Returns the maximum over checked coordinates of
//   |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|).
// f must be a pure tensor-to-scalar function; it is re-evaluated (without
// gradient recording) at x +- h*e_i per coordinate. Non-finite values of f
// are rejected.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h);

// Same, restricted to the given coordinate subset.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h,
                               std::span<const int> coords);

// Variant for live parameters: loss_fn closes over a model that already owns
// `param`. The analytic gradient is taken from param.grad() after one
// backward pass; finite differences bump param's storage in place (restored
// afterwards). Checks the given coordinates of param.
double finite_difference_check_param(const std::function<Tensor()>& loss_fn,
                                     Tensor param, double h,
                                     std::span<const int> coords);

}  // namespace flowseed::autograd
