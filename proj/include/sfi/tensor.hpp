#pragma once

// Minimal dense tensor with reverse-mode differentiation.
//
// Tensors are rank <= 3 (batch x channel x time) arrays of doubles. Each op
// records a backward closure on the result node when any input requires a
// gradient; `backward(loss)` walks the recorded graph in reverse topological
// order. A graph is single-threaded; op kernels may parallelize internally.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sfi {
class KernelDesigner;
}

namespace sfi::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;
  double item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Reverse-mode accumulation from a scalar loss into every tracked ancestor.
void backward(const Tensor& loss);

// x: B x Cin x L, w: Cout x Cin/groups x K  ->  B x Cout x T
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride = 1, std::size_t padding = 0,
              std::size_t groups = 1);
// x: B x Cin x T, w: Cin x Cout x K  ->  B x Cout x ((T-1)*stride + K)
Tensor transposed_conv1d(const Tensor& x, const Tensor& w, std::size_t stride);
// x: B x C x T, bias: C
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// Normalizes each batch item jointly over (C, T), then applies per-channel gain and bias.
Tensor global_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);

Tensor relu(const Tensor& x);
// slope: one value per channel (axis 1)
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor sum(const Tensor& x);

// Time-axis (last axis) helpers.
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
// Trims or zero-pads the last axis to `length`.
Tensor fit_length(const Tensor& x, std::size_t length);

Tensor reshape(const Tensor& x, Shape shape);
// B x C x T -> (B * times) x C x T, each item repeated `times` times consecutively.
Tensor repeat_batch(const Tensor& x, std::size_t times);

// Convolution weights generated from latent MGF parameters.
// params: C x 3 rows of (mu, sigma, phi)  ->  C x 1 x K time-reversed least-squares kernels.
Tensor mgf_kernels(const Tensor& params, std::shared_ptr<const KernelDesigner> designer);

}  // namespace sfi::ad
