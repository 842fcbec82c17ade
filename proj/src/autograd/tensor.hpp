#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace flowseed::autograd {

namespace detail {

// One recorded value in the computation graph. Interior nodes carry a
// backward rule and keep their parents alive; leaves are parameters or
// inputs. The graph formed by `parents` is the tape: children are created
// after their parents, so a post-order walk from the loss is a valid
// topological order.
struct Node {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_used = false;  // set on the root once backward() ran
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int size() const { return static_cast<int>(values.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// True while gradients are being recorded (default). Scoped off by
// NoGradGuard for evaluation passes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense double tensor participating in reverse-mode differentiation.
// Shallow handle; copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const;
  int size() const;
  bool requires_grad() const;
  bool is_leaf() const;

  const std::vector<double>& values() const;
  // Mutable access to a leaf's storage (optimizer updates, test setup).
  std::vector<double>& values_mut();
  double item() const;  // scalar tensors only

  bool has_grad() const;
  const std::vector<double>& grad() const;  // empty when no grad accumulated
  void zero_grad();

  // Reverse sweep from this scalar. Populates grad on every requires_grad
  // leaf reachable through the tape. Single-shot: a second call on the same
  // result is an error.
  void backward() const;

  Tensor detach() const;

  detail::Node* node() const { return n_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return n_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> n_;
};

// Operation set needed by the embedding network and losses. All of these
// record backward rules when gradients are enabled and any input requires
// grad.

// Cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
// kernel (k odd) plus per-channel bias, zero padding `padding` on each side.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding);
Tensor relu(const Tensor& input);
Tensor avg_pool2(const Tensor& input);         // C x H x W -> C x H/2 x W/2
Tensor nearest_upsample2(const Tensor& input); // C x H x W -> C x 2H x 2W
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& input);
Tensor sum(const Tensor& input);               // -> scalar
Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor mul_scalar(const Tensor& a, double s);

// Interior helper for modules that implement fused ops (flowloss, bce).
Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn);

}  // namespace flowseed::autograd
