#include "sfi/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "sfi/conv_kernels.hpp"
#include "sfi/filter_design.hpp"

namespace sfi::ad {

namespace {

thread_local bool g_grad_enabled = true;

void check_finite([[maybe_unused]] const std::vector<double>& v) {
#ifndef NDEBUG
  for (double x : v) assert(std::isfinite(x) && "non-finite tensor value");
#endif
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  check_finite(node->value);
  return node;
}

// Attaches history to `out` if recording is on and any input is tracked.
Tensor finish(std::shared_ptr<Node> out, std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> backward_fn) {
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->requires_grad();
    if (any) {
      out->requires_grad = true;
      for (const Tensor* t : inputs) out->parents.push_back(t->shared());
      out->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(out));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
}

// Accumulates into a parent's gradient only when it is tracked.
template <typename F>
void with_grad(Node& parent, F&& f) {
  if (parent.requires_grad) f(parent.ensure_grad());
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::span<double> Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = element_count(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (element_count(shape) != values.size()) throw std::invalid_argument("Tensor::from: size mismatch");
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(new_node(node_->shape, node_->value)); }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(size()) + " elements");
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; parents are visited in recorded order, so the
  // resulting schedule (and every accumulation order) is fixed by the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding, std::size_t groups) {
  require_rank(x, 3, "conv1d");
  require_rank(w, 3, "conv1d");
  kernels::ConvShape s{x.dim(0), x.dim(1), w.dim(0), x.dim(2), w.dim(2), stride, padding, groups};
  s.validate();
  if (w.dim(1) != s.in_per_group()) throw std::invalid_argument("conv1d: weight input-channel mismatch");
  std::vector<double> y(s.y_size());
  kernels::conv1d_forward(s, x.data(), w.data(), y);
  auto out = new_node({s.batch, s.out_channels, s.out_length()}, std::move(y));
  return finish(std::move(out), {&x, &w}, [s](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    with_grad(xn, [&](std::span<double> gx) { kernels::conv1d_backward_input(s, self.grad, wn.value, gx); });
    with_grad(wn, [&](std::span<double> gw) { kernels::conv1d_backward_weight(s, xn.value, self.grad, gw); });
  });
}

Tensor transposed_conv1d(const Tensor& x, const Tensor& w, std::size_t stride) {
  require_rank(x, 3, "transposed_conv1d");
  require_rank(w, 3, "transposed_conv1d");
  if (w.dim(0) != x.dim(1)) throw std::invalid_argument("transposed_conv1d: weight input-channel mismatch");
  if (stride == 0 || x.dim(2) == 0) throw std::invalid_argument("transposed_conv1d: empty input or zero stride");
  const std::size_t frames = x.dim(2);
  const std::size_t kernel = w.dim(2);
  // The adjoint of a P=0 convolution whose input is the transposed output.
  kernels::ConvShape s{x.dim(0), w.dim(1), w.dim(0), (frames - 1) * stride + kernel, kernel, stride, 0, 1};
  std::vector<double> y(s.x_size(), 0.0);
  kernels::conv1d_backward_input(s, x.data(), w.data(), y);
  auto out = new_node({s.batch, s.in_channels, s.in_length}, std::move(y));
  return finish(std::move(out), {&x, &w}, [s](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    with_grad(xn, [&](std::span<double> gx) {
      std::vector<double> tmp(s.y_size());
      kernels::conv1d_forward(s, self.grad, wn.value, tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
    });
    with_grad(wn, [&](std::span<double> gw) { kernels::conv1d_backward_weight(s, self.grad, xn.value, gw); });
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 3, "add_channel_bias");
  if (bias.size() != x.dim(1)) throw std::invalid_argument("add_channel_bias: bias length mismatch");
  const std::size_t batch = x.dim(0), channels = x.dim(1), frames = x.dim(2);
  std::vector<double> y(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = y.data() + (b * channels + c) * frames;
      const double v = bias.data()[c];
      for (std::size_t t = 0; t < frames; ++t) row[t] += v;
    }
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x, &bias}, [batch, channels, frames](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
    with_grad(*self.parents[1], [&](std::span<double> gb) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
          const double* row = self.grad.data() + (b * channels + c) * frames;
          double acc = 0.0;
          for (std::size_t t = 0; t < frames; ++t) acc += row[t];
          gb[c] += acc;
        }
    });
  });
}

Tensor global_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 3, "global_layer_norm");
  const std::size_t batch = x.dim(0), channels = x.dim(1), frames = x.dim(2);
  if (channels == 0 || frames == 0) throw std::invalid_argument("global_layer_norm: empty channel or time axis");
  if (gain.size() != channels || bias.size() != channels) {
    throw std::invalid_argument("global_layer_norm: gain/bias length mismatch");
  }
  const std::size_t per_item = channels * frames;
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(batch);
  std::vector<double> y(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* in = x.data().data() + b * per_item;
    double mean = 0.0;
    for (std::size_t i = 0; i < per_item; ++i) mean += in[i];
    mean /= static_cast<double>(per_item);
    double var = 0.0;
    for (std::size_t i = 0; i < per_item; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(per_item);
    inv_std[b] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < channels; ++c) {
      const double g = gain.data()[c];
      const double beta = bias.data()[c];
      for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t i = b * per_item + c * frames + t;
        xhat[i] = (x.data()[i] - mean) * inv_std[b];
        y[i] = g * xhat[i] + beta;
      }
    }
  }
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x, &gain, &bias},
                [batch, channels, frames, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  const std::size_t per_item = channels * frames;
                  const Node& gn = *self.parents[1];
                  with_grad(*self.parents[0], [&](std::span<double> gx) {
                    for (std::size_t b = 0; b < batch; ++b) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t c = 0; c < channels; ++c)
                        for (std::size_t t = 0; t < frames; ++t) {
                          const std::size_t i = b * per_item + c * frames + t;
                          const double d = self.grad[i] * gn.value[c];
                          mean_d += d;
                          mean_dx += d * xhat[i];
                        }
                      mean_d /= static_cast<double>(per_item);
                      mean_dx /= static_cast<double>(per_item);
                      for (std::size_t c = 0; c < channels; ++c)
                        for (std::size_t t = 0; t < frames; ++t) {
                          const std::size_t i = b * per_item + c * frames + t;
                          const double d = self.grad[i] * gn.value[c];
                          gx[i] += inv_std[b] * (d - mean_d - xhat[i] * mean_dx);
                        }
                    }
                  });
                  with_grad(*self.parents[1], [&](std::span<double> gg) {
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t c = 0; c < channels; ++c) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < frames; ++t) {
                          const std::size_t i = b * per_item + c * frames + t;
                          acc += self.grad[i] * xhat[i];
                        }
                        gg[c] += acc;
                      }
                  });
                  with_grad(*self.parents[2], [&](std::span<double> gb) {
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t c = 0; c < channels; ++c) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < frames; ++t) acc += self.grad[b * per_item + c * frames + t];
                        gb[c] += acc;
                      }
                  });
                });
}

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x}, [](Node& self) {
    const Node& xn = *self.parents[0];
    with_grad(*self.parents[0], [&](std::span<double> gx) {
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xn.value[i] > 0.0) gx[i] += self.grad[i];
    });
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  require_rank(x, 3, "prelu");
  const std::size_t batch = x.dim(0), channels = x.dim(1), frames = x.dim(2);
  if (slope.size() != channels) throw std::invalid_argument("prelu: slope length mismatch");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x.data()[i];
    y[i] = v > 0.0 ? v : slope.data()[(i / frames) % channels] * v;
  }
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x, &slope}, [batch, channels, frames](Node& self) {
    const Node& xn = *self.parents[0];
    const Node& sn = *self.parents[1];
    with_grad(*self.parents[0], [&](std::span<double> gx) {
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += self.grad[i] * (xn.value[i] > 0.0 ? 1.0 : sn.value[(i / frames) % channels]);
    });
    with_grad(*self.parents[1], [&](std::span<double> gs) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
          double acc = 0.0;
          for (std::size_t t = 0; t < frames; ++t) {
            const std::size_t i = (b * channels + c) * frames + t;
            if (xn.value[i] <= 0.0) acc += self.grad[i] * xn.value[i];
          }
          gs[c] += acc;
        }
    });
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x}, [](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double s = self.value[i];
        gx[i] += self.grad[i] * s * (1.0 - s);
      }
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  auto out = new_node(a.shape(), std::move(y));
  return finish(std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      with_grad(*p, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  auto out = new_node(a.shape(), std::move(y));
  return finish(std::move(out), {&a, &b}, [](Node& self) {
    const Node& an = *self.parents[0];
    const Node& bn = *self.parents[1];
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    });
    with_grad(*self.parents[1], [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    });
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * factor;
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x}, [factor](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] + value;
  auto out = new_node(x.shape(), std::move(y));
  return finish(std::move(out), {&x}, [](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto out = new_node({}, {acc});
  return finish(std::move(out), {&x}, [](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (auto& v : g) v += self.grad[0];
    });
  });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (x.rank() == 0 || factor == 0) throw std::invalid_argument("upsample_nearest: bad rank or factor");
  const std::size_t frames = x.shape().back();
  const std::size_t rows = x.size() / std::max<std::size_t>(frames, 1);
  Shape shape = x.shape();
  shape.back() = frames * factor;
  std::vector<double> y(rows * frames * factor);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < frames * factor; ++t) y[r * frames * factor + t] = x.data()[r * frames + t / factor];
  auto out = new_node(std::move(shape), std::move(y));
  return finish(std::move(out), {&x}, [rows, frames, factor](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < frames * factor; ++t) g[r * frames + t / factor] += self.grad[r * frames * factor + t];
    });
  });
}

Tensor fit_length(const Tensor& x, std::size_t length) {
  if (x.rank() == 0) throw std::invalid_argument("fit_length: scalar input");
  const std::size_t frames = x.shape().back();
  if (frames == length) return x;
  const std::size_t rows = frames == 0 ? 0 : x.size() / frames;
  const std::size_t keep = std::min(frames, length);
  Shape shape = x.shape();
  shape.back() = length;
  std::vector<double> y(rows * length, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * frames), keep,
                y.begin() + static_cast<std::ptrdiff_t>(r * length));
  auto out = new_node(std::move(shape), std::move(y));
  return finish(std::move(out), {&x}, [rows, frames, length, keep](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < keep; ++t) g[r * frames + t] += self.grad[r * length + t];
    });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto out = new_node(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return finish(std::move(out), {&x}, [](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Tensor repeat_batch(const Tensor& x, std::size_t times) {
  require_rank(x, 3, "repeat_batch");
  const std::size_t batch = x.dim(0);
  const std::size_t item = x.dim(1) * x.dim(2);
  std::vector<double> y(batch * times * item);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < times; ++m)
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(b * item), item,
                  y.begin() + static_cast<std::ptrdiff_t>((b * times + m) * item));
  auto out = new_node({batch * times, x.dim(1), x.dim(2)}, std::move(y));
  return finish(std::move(out), {&x}, [batch, times, item](Node& self) {
    with_grad(*self.parents[0], [&](std::span<double> g) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t m = 0; m < times; ++m)
          for (std::size_t i = 0; i < item; ++i) g[b * item + i] += self.grad[(b * times + m) * item + i];
    });
  });
}

Tensor mgf_kernels(const Tensor& params, std::shared_ptr<const KernelDesigner> designer) {
  require_rank(params, 2, "mgf_kernels");
  if (params.dim(1) != 3) throw std::invalid_argument("mgf_kernels: params must be C x 3");
  const std::size_t channels = params.dim(0);
  const std::size_t kernel = designer->kernel_size();
  std::vector<double> w(channels * kernel);
  for (std::size_t c = 0; c < channels; ++c) {
    const MgfParams p{params.data()[3 * c], params.data()[3 * c + 1], params.data()[3 * c + 2]};
    const auto taps = designer->design(p);
    std::copy(taps.begin(), taps.end(), w.begin() + static_cast<std::ptrdiff_t>(c * kernel));
  }
  auto out = new_node({channels, 1, kernel}, std::move(w));
  return finish(std::move(out), {&params}, [channels, kernel, designer](Node& self) {
    const Node& pn = *self.parents[0];
    with_grad(*self.parents[0], [&](std::span<double> gp) {
      const auto& omegas = designer->grid().omegas;
      const std::size_t rows = omegas.size();
      const auto pinv = designer->pseudo_inverse();
      std::vector<double> g_target(2 * rows);
      for (std::size_t c = 0; c < channels; ++c) {
        // Undo the time reversal, then back through b = pinv * [Re G; Im G].
        std::fill(g_target.begin(), g_target.end(), 0.0);
        for (std::size_t k = 0; k < kernel; ++k) {
          const double gb = self.grad[c * kernel + (kernel - 1 - k)];
          if (gb == 0.0) continue;
          const double* row = pinv.data() + k * 2 * rows;
          for (std::size_t i = 0; i < 2 * rows; ++i) g_target[i] += row[i] * gb;
        }
        const MgfParams p{pn.value[3 * c], pn.value[3 * c + 1], pn.value[3 * c + 2]};
        for (std::size_t i = 0; i < rows; ++i) {
          const MgfGradient d = eval_mgf_gradient(p, omegas[i]);
          for (std::size_t j = 0; j < 3; ++j) gp[3 * c + j] += g_target[i] * d.re[j] + g_target[rows + i] * d.im[j];
        }
      }
    });
  });
}

}  // namespace sfi::ad
