#pragma once

// Dense 1D convolution kernels (cross-correlation convention).
//
// Layouts are row-major:
//   x      : batch x in_channels x in_length
//   weight : out_channels x (in_channels / groups) x kernel_size
//   y      : batch x out_channels x out_length
//
// The functions in `sfi::kernels` are OpenMP-parallel. Every output element
// is owned by exactly one thread and accumulated in a fixed order, so results
// do not depend on the thread count. `sfi::kernels::serial` holds the direct
// per-element reference used to test them.

#include <cstddef>
#include <span>

namespace sfi::kernels {

struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t in_length = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t out_length() const;
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t x_size() const { return batch * in_channels * in_length; }
  std::size_t w_size() const { return out_channels * in_per_group() * kernel_size; }
  std::size_t y_size() const { return batch * out_channels * out_length(); }
  // Throws std::invalid_argument when the shape is inconsistent.
  void validate() const;
};

// y = conv(x, w); y is overwritten.
void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w, std::span<double> y);
// grad_x += d(conv)/dx^T grad_y
void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_y, std::span<const double> w,
                           std::span<double> grad_x);
// grad_w += d(conv)/dw^T grad_y
void conv1d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> grad_y,
                            std::span<double> grad_w);

namespace serial {
void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w, std::span<double> y);
void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_y, std::span<const double> w,
                           std::span<double> grad_x);
void conv1d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> grad_y,
                            std::span<double> grad_w);
}  // namespace serial

}  // namespace sfi::kernels
