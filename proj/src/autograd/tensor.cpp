#include "autograd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "core/parallel.hpp"
#include "simd/vec_ops.hpp"

namespace flowseed::autograd {

namespace {

thread_local int no_grad_depth = 0;

long long shape_product(const std::vector<int>& shape) {
  long long n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("tensor extent must be non-negative");
    n *= e;
  }
  return n;
}

std::shared_ptr<detail::Node> new_leaf(std::vector<int> shape,
                                       std::vector<double> values,
                                       bool requires_grad) {
  if (shape_product(shape) != static_cast<long long>(values.size()))
    throw std::invalid_argument("tensor shape does not match value count");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  return n;
}

void check_rank(const Tensor& t, int rank, const char* what) {
  if (static_cast<int>(t.shape().size()) != rank)
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + " tensor");
}

}  // namespace

bool grad_enabled() { return no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  const auto n = shape_product(shape);
  return wrap(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  const auto n = shape_product(shape);
  return wrap(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  return wrap(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

const std::vector<int>& Tensor::shape() const { return n_->shape; }
int Tensor::size() const { return n_->size(); }
bool Tensor::requires_grad() const { return n_->requires_grad; }
bool Tensor::is_leaf() const { return n_->is_leaf; }
const std::vector<double>& Tensor::values() const { return n_->values; }

std::vector<double>& Tensor::values_mut() {
  if (!n_->is_leaf)
    throw std::logic_error("values_mut: only leaf tensors may be mutated");
  return n_->values;
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return n_->values[0];
}

bool Tensor::has_grad() const { return !n_->grad.empty(); }

const std::vector<double>& Tensor::grad() const { return n_->grad; }

void Tensor::zero_grad() { n_->grad.clear(); }

Tensor Tensor::detach() const {
  return from_values(n_->shape, n_->values, false);
}

void Tensor::backward() const {
  detail::Node* root = n_.get();
  if (root == nullptr) throw std::logic_error("backward: undefined tensor");
  if (root->size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!root->requires_grad)
    throw std::invalid_argument("backward: scalar is not on the tape");
  if (root->backward_used)
    throw std::logic_error("backward: already called on this result");
  root->backward_used = true;

  // Post-order DFS gives children after parents; reversed it is a valid
  // execution order for backward rules.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn) {
  if (shape_product(shape) != static_cast<long long>(values.size()))
    throw std::invalid_argument("make_op: shape does not match value count");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool any_grad = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) any_grad = any_grad || p.requires_grad();
  }
  if (any_grad) {
    n->requires_grad = true;
    n->is_leaf = false;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvDims {
  int cin, h, w, cout, k, pad, ho, wo, hp, wp;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                   int padding) {
  check_rank(input, 3, "conv2d input");
  check_rank(kernel, 4, "conv2d kernel");
  check_rank(bias, 1, "conv2d bias");
  ConvDims d{};
  d.cin = input.shape()[0];
  d.h = input.shape()[1];
  d.w = input.shape()[2];
  d.cout = kernel.shape()[0];
  d.k = kernel.shape()[2];
  d.pad = padding;
  if (kernel.shape()[1] != d.cin)
    throw std::invalid_argument("conv2d: kernel input channels (" +
                                std::to_string(kernel.shape()[1]) +
                                ") do not match input channels (" +
                                std::to_string(d.cin) + ")");
  if (kernel.shape()[3] != d.k)
    throw std::invalid_argument("conv2d: kernel must be square");
  if (d.k % 2 == 0) throw std::invalid_argument("conv2d: kernel extent must be odd");
  if (bias.shape()[0] != d.cout)
    throw std::invalid_argument("conv2d: bias length does not match output channels");
  if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
  if (padding > d.k - 1)
    throw std::invalid_argument("conv2d: padding must not exceed k-1");
  d.hp = d.h + 2 * d.pad;
  d.wp = d.w + 2 * d.pad;
  d.ho = d.hp - d.k + 1;
  d.wo = d.wp - d.k + 1;
  if (d.ho <= 0 || d.wo <= 0)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  return d;
}

// Zero-pad each channel plane of src (c x h x w) by pad on every side.
std::vector<double> pad_planes(const double* src, int c, int h, int w, int pad) {
  const int hp = h + 2 * pad;
  const int wp = w + 2 * pad;
  std::vector<double> out(static_cast<size_t>(c) * hp * wp, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    const double* s = src + static_cast<size_t>(ci) * h * w;
    double* t = out.data() + static_cast<size_t>(ci) * hp * wp;
    for (int y = 0; y < h; ++y) {
      std::copy_n(s + static_cast<size_t>(y) * w, w,
                  t + static_cast<size_t>(y + pad) * wp + pad);
    }
  }
  return out;
}

// out (cout x ho x wo) += correlation of padded (cin x hp x wp) with
// weights (cout x cin x k x k). Parallel over output channels.
void correlate_acc(const double* padded, const double* weights, double* out,
                   int cin, int hp, int wp, int cout, int k, int ho, int wo) {
  const auto& t = simd::ops();
  parallel_for(cout, [&](int co) {
    double* oplane = out + static_cast<size_t>(co) * ho * wo;
    for (int ci = 0; ci < cin; ++ci) {
      const double* pplane = padded + static_cast<size_t>(ci) * hp * wp;
      const double* w9 =
          weights + (static_cast<size_t>(co) * cin + ci) * k * k;
      if (k == 3) {
        for (int y = 0; y < ho; ++y) {
          const double* r0 = pplane + static_cast<size_t>(y) * wp;
          t.conv3_row_acc(wo, r0, r0 + wp, r0 + 2 * wp, w9,
                          oplane + static_cast<size_t>(y) * wo);
        }
      } else if (k == 1 && hp * wp == ho * wo) {
        t.axpy(static_cast<size_t>(ho) * wo, w9[0], pplane, oplane);
      } else {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = w9[ky * k + kx];
            for (int y = 0; y < ho; ++y) {
              t.axpy(wo, wv, pplane + static_cast<size_t>(y + ky) * wp + kx,
                     oplane + static_cast<size_t>(y) * wo);
            }
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding) {
  const ConvDims d = conv_dims(input, kernel, bias, padding);

  std::vector<double> padded =
      pad_planes(input.values().data(), d.cin, d.h, d.w, d.pad);
  std::vector<double> out(static_cast<size_t>(d.cout) * d.ho * d.wo);
  for (int co = 0; co < d.cout; ++co) {
    std::fill_n(out.begin() + static_cast<size_t>(co) * d.ho * d.wo,
                static_cast<size_t>(d.ho) * d.wo, bias.values()[co]);
  }
  correlate_acc(padded.data(), kernel.values().data(), out.data(), d.cin, d.hp,
                d.wp, d.cout, d.k, d.ho, d.wo);

  auto backward = [d](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    detail::Node* ker = self.parents[1].get();
    detail::Node* b = self.parents[2].get();
    const double* g = self.grad.data();
    const auto& t = simd::ops();

    if (b->requires_grad) {
      b->ensure_grad();
      for (int co = 0; co < d.cout; ++co) {
        b->grad[co] += t.sum(static_cast<size_t>(d.ho) * d.wo,
                             g + static_cast<size_t>(co) * d.ho * d.wo);
      }
    }

    if (ker->requires_grad) {
      ker->ensure_grad();
      const std::vector<double> padded =
          pad_planes(in->values.data(), d.cin, d.h, d.w, d.pad);
      double* wg = ker->grad.data();
      parallel_for(d.cout, [&](int co) {
        const double* gplane = g + static_cast<size_t>(co) * d.ho * d.wo;
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* pplane = padded.data() + static_cast<size_t>(ci) * d.hp * d.wp;
          double* w9 = wg + (static_cast<size_t>(co) * d.cin + ci) * d.k * d.k;
          if (d.k == 3) {
            for (int y = 0; y < d.ho; ++y) {
              const double* r0 = pplane + static_cast<size_t>(y) * d.wp;
              t.corr3_row_acc(d.wo, gplane + static_cast<size_t>(y) * d.wo, r0,
                              r0 + d.wp, r0 + 2 * d.wp, w9);
            }
          } else {
            for (int ky = 0; ky < d.k; ++ky) {
              for (int kx = 0; kx < d.k; ++kx) {
                double acc = 0.0;
                for (int y = 0; y < d.ho; ++y) {
                  acc += t.dot(d.wo, gplane + static_cast<size_t>(y) * d.wo,
                               pplane + static_cast<size_t>(y + ky) * d.wp + kx);
                }
                w9[ky * d.k + kx] += acc;
              }
            }
          }
        }
      });
    }

    if (in->requires_grad) {
      in->ensure_grad();
      // Input gradient is the correlation of the (k-1-pad)-padded output
      // gradient with the channel-swapped, spatially flipped kernel.
      const int q = d.k - 1 - d.pad;
      if (q < 0) throw std::logic_error("conv2d backward: padding exceeds k-1");
      const std::vector<double> gpad =
          pad_planes(self.grad.data(), d.cout, d.ho, d.wo, q);
      const int ghp = d.ho + 2 * q;
      const int gwp = d.wo + 2 * q;
      const std::vector<double>& wv = ker->values;
      parallel_for(d.cin, [&](int ci) {
        double* igplane = in->grad.data() + static_cast<size_t>(ci) * d.h * d.w;
        std::vector<double> wflip(static_cast<size_t>(d.k) * d.k);
        for (int co = 0; co < d.cout; ++co) {
          const double* w9 =
              wv.data() + (static_cast<size_t>(co) * d.cin + ci) * d.k * d.k;
          for (int i = 0; i < d.k * d.k; ++i) wflip[i] = w9[d.k * d.k - 1 - i];
          const double* gplane = gpad.data() + static_cast<size_t>(co) * ghp * gwp;
          if (d.k == 3) {
            for (int y = 0; y < d.h; ++y) {
              const double* r0 = gplane + static_cast<size_t>(y) * gwp;
              t.conv3_row_acc(d.w, r0, r0 + gwp, r0 + 2 * gwp, wflip.data(),
                              igplane + static_cast<size_t>(y) * d.w);
            }
          } else if (d.k == 1 && ghp * gwp == d.h * d.w) {
            t.axpy(static_cast<size_t>(d.h) * d.w, wflip[0], gplane, igplane);
          } else {
            for (int ky = 0; ky < d.k; ++ky) {
              for (int kx = 0; kx < d.k; ++kx) {
                const double wk = wflip[ky * d.k + kx];
                for (int y = 0; y < d.h; ++y) {
                  t.axpy(d.w, wk, gplane + static_cast<size_t>(y + ky) * gwp + kx,
                         igplane + static_cast<size_t>(y) * d.w);
                }
              }
            }
          }
        }
      });
    }
  };

  return make_op({d.cout, d.ho, d.wo}, std::move(out), {input, kernel, bias},
                 std::move(backward));
}

// ---------------------------------------------------------------------------
// elementwise & shape ops

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.size());
  simd::ops().relu(out.size(), input.values().data(), out.data());
  auto backward = [](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    simd::ops().relu_backward(self.values.size(), in->values.data(),
                              self.grad.data(), in->grad.data());
  };
  return make_op(input.shape(), std::move(out), {input}, std::move(backward));
}

Tensor avg_pool2(const Tensor& input) {
  check_rank(input, 3, "avg_pool2");
  const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("avg_pool2: spatial extents must be even");
  const int ho = h / 2, wo = w / 2;
  std::vector<double> out(static_cast<size_t>(c) * ho * wo);
  const double* src = input.values().data();
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < ho; ++y) {
      const double* r0 = src + (static_cast<size_t>(ci) * h + 2 * y) * w;
      const double* r1 = r0 + w;
      double* o = out.data() + (static_cast<size_t>(ci) * ho + y) * wo;
      for (int x = 0; x < wo; ++x) {
        o[x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  auto backward = [c, h, w, ho, wo](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < ho; ++y) {
        const double* g = self.grad.data() + (static_cast<size_t>(ci) * ho + y) * wo;
        double* r0 = in->grad.data() + (static_cast<size_t>(ci) * h + 2 * y) * w;
        double* r1 = r0 + w;
        for (int x = 0; x < wo; ++x) {
          const double q = 0.25 * g[x];
          r0[2 * x] += q;
          r0[2 * x + 1] += q;
          r1[2 * x] += q;
          r1[2 * x + 1] += q;
        }
      }
    }
  };
  return make_op({c, ho, wo}, std::move(out), {input}, std::move(backward));
}

Tensor nearest_upsample2(const Tensor& input) {
  check_rank(input, 3, "nearest_upsample2");
  const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const int ho = 2 * h, wo = 2 * w;
  std::vector<double> out(static_cast<size_t>(c) * ho * wo);
  const double* src = input.values().data();
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      const double* s = src + (static_cast<size_t>(ci) * h + y) * w;
      double* o0 = out.data() + (static_cast<size_t>(ci) * ho + 2 * y) * wo;
      double* o1 = o0 + wo;
      for (int x = 0; x < w; ++x) {
        o0[2 * x] = o0[2 * x + 1] = o1[2 * x] = o1[2 * x + 1] = s[x];
      }
    }
  }
  auto backward = [c, h, w, ho, wo](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < h; ++y) {
        double* ig = in->grad.data() + (static_cast<size_t>(ci) * h + y) * w;
        const double* g0 = self.grad.data() + (static_cast<size_t>(ci) * ho + 2 * y) * wo;
        const double* g1 = g0 + wo;
        for (int x = 0; x < w; ++x) {
          ig[x] += g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
        }
      }
    }
  };
  return make_op({c, ho, wo}, std::move(out), {input}, std::move(backward));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_rank(a, 3, "concat_channels");
  check_rank(b, 3, "concat_channels");
  if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
    throw std::invalid_argument("concat_channels: spatial extents differ");
  const int ca = a.shape()[0], cb = b.shape()[0];
  const int h = a.shape()[1], w = a.shape()[2];
  std::vector<double> out;
  out.reserve(a.values().size() + b.values().size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto backward = [ca, cb, h, w](detail::Node& self) {
    const size_t plane = static_cast<size_t>(h) * w;
    detail::Node* na = self.parents[0].get();
    detail::Node* nb = self.parents[1].get();
    if (na->requires_grad && ca > 0) {
      na->ensure_grad();
      simd::ops().axpy(plane * ca, 1.0, self.grad.data(), na->grad.data());
    }
    if (nb->requires_grad && cb > 0) {
      nb->ensure_grad();
      simd::ops().axpy(plane * cb, 1.0, self.grad.data() + plane * ca,
                       nb->grad.data());
    }
  };
  return make_op({ca + cb, h, w}, std::move(out), {a, b}, std::move(backward));
}

Tensor sigmoid(const Tensor& input) {
  std::vector<double> out(input.size());
  const double* x = input.values().data();
  // Saturated logits would round to exactly 0 or 1; keep the output strictly
  // inside the open unit interval.
  constexpr double kLo = 1e-300;
  constexpr double kHi = 1.0 - 1.1102230246251565e-16;
  for (size_t i = 0; i < out.size(); ++i) {
    double s;
    if (x[i] >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      s = e / (1.0 + e);
    }
    out[i] = std::clamp(s, kLo, kHi);
  }
  auto backward = [](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    for (size_t i = 0; i < self.values.size(); ++i) {
      const double s = self.values[i];
      in->grad[i] += self.grad[i] * s * (1.0 - s);
    }
  };
  return make_op(input.shape(), std::move(out), {input}, std::move(backward));
}

Tensor sum(const Tensor& input) {
  const double total = simd::ops().sum(input.size(), input.values().data());
  auto backward = [](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    const double g = self.grad[0];
    for (double& v : in->grad) v += g;
  };
  return make_op({1}, {total}, {input}, std::move(backward));
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch");
  std::vector<double> out(a.values());
  simd::ops().axpy(out.size(), 1.0, b.values().data(), out.data());
  auto backward = [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      simd::ops().axpy(self.grad.size(), 1.0, self.grad.data(), p->grad.data());
    }
  };
  return make_op(a.shape(), std::move(out), {a, b}, std::move(backward));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch");
  std::vector<double> out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto backward = [](detail::Node& self) {
    detail::Node* na = self.parents[0].get();
    detail::Node* nb = self.parents[1].get();
    if (na->requires_grad) {
      na->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        na->grad[i] += self.grad[i] * nb->values[i];
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        nb->grad[i] += self.grad[i] * na->values[i];
    }
  };
  return make_op(a.shape(), std::move(out), {a, b}, std::move(backward));
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  simd::ops().scale(out.size(), s, a.values().data(), out.data());
  auto backward = [s](detail::Node& self) {
    detail::Node* in = self.parents[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    simd::ops().axpy(self.grad.size(), s, self.grad.data(), in->grad.data());
  };
  return make_op(a.shape(), std::move(out), {a}, std::move(backward));
}

}  // namespace flowseed::autograd
