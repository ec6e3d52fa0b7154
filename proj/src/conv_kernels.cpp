#include "sfi/conv_kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>

namespace sfi::kernels {

std::size_t ConvShape::out_length() const {
  const std::size_t padded = in_length + 2 * padding;
  if (padded < kernel_size || stride == 0) return 0;
  return (padded - kernel_size) / stride + 1;
}

void ConvShape::validate() const {
  if (batch == 0 || in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 || groups == 0) {
    throw std::invalid_argument("conv1d: zero-sized dimension");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw std::invalid_argument("conv1d: channels not divisible by groups");
  }
  if (in_length + 2 * padding < kernel_size) {
    throw std::invalid_argument("conv1d: padded input shorter than kernel");
  }
}

namespace {

void check_sizes(const ConvShape& s, std::size_t x, std::size_t w, std::size_t y) {
  s.validate();
  if (x != s.x_size() || w != s.w_size() || y != s.y_size()) {
    throw std::invalid_argument("conv1d: buffer size does not match shape");
  }
}

// Range of output frames t for which t*stride + k - padding lies inside [0, in_length).
struct FrameRange {
  std::size_t begin;
  std::size_t end;
};

FrameRange valid_frames(const ConvShape& s, std::size_t k, std::size_t frames) {
  // need t*S + k >= P  and  t*S + k - P <= L - 1
  std::size_t begin = 0;
  if (k < s.padding) begin = (s.padding - k + s.stride - 1) / s.stride;
  std::size_t end = 0;
  if (s.in_length + s.padding > k) end = (s.in_length + s.padding - k - 1) / s.stride + 1;
  end = std::min(end, frames);
  if (begin > end) begin = end;
  return {begin, end};
}

}  // namespace

void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w, std::span<double> y) {
  check_sizes(s, x.size(), w.size(), y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const auto jobs = static_cast<std::int64_t>(s.batch * s.out_channels);

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / s.out_channels;
    const std::size_t o = static_cast<std::size_t>(job) % s.out_channels;
    const std::size_t g = o / cout_g;
    double* out = y.data() + (b * s.out_channels + o) * frames;
    std::fill(out, out + frames, 0.0);
    for (std::size_t il = 0; il < cin_g; ++il) {
      const std::size_t ci = g * cin_g + il;
      const double* in = x.data() + (b * s.in_channels + ci) * s.in_length;
      const double* wk = w.data() + (o * cin_g + il) * s.kernel_size;
      for (std::size_t k = 0; k < s.kernel_size; ++k) {
        const double wv = wk[k];
        const auto r = valid_frames(s, k, frames);
        if (s.stride == 1) {
          const double* src = in + (r.begin + k - s.padding);
          double* dst = out + r.begin;
          for (std::size_t t = 0; t < r.end - r.begin; ++t) dst[t] += wv * src[t];
        } else {
          for (std::size_t t = r.begin; t < r.end; ++t) out[t] += wv * in[t * s.stride + k - s.padding];
        }
      }
    }
  }
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_y, std::span<const double> w,
                           std::span<double> grad_x) {
  check_sizes(s, grad_x.size(), w.size(), grad_y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const auto jobs = static_cast<std::int64_t>(s.batch * s.in_channels);

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / s.in_channels;
    const std::size_t ci = static_cast<std::size_t>(job) % s.in_channels;
    const std::size_t g = ci / cin_g;
    const std::size_t il = ci % cin_g;
    double* gx = grad_x.data() + (b * s.in_channels + ci) * s.in_length;
    for (std::size_t ol = 0; ol < cout_g; ++ol) {
      const std::size_t o = g * cout_g + ol;
      const double* gy = grad_y.data() + (b * s.out_channels + o) * frames;
      const double* wk = w.data() + (o * cin_g + il) * s.kernel_size;
      if (s.padding == 0) {
        // Scatter each frame as a contiguous kernel-length run.
        for (std::size_t t = 0; t < frames; ++t) {
          const double gv = gy[t];
          double* dst = gx + t * s.stride;
          for (std::size_t k = 0; k < s.kernel_size; ++k) dst[k] += gv * wk[k];
        }
      } else {
        for (std::size_t k = 0; k < s.kernel_size; ++k) {
          const double wv = wk[k];
          const auto r = valid_frames(s, k, frames);
          for (std::size_t t = r.begin; t < r.end; ++t) gx[t * s.stride + k - s.padding] += wv * gy[t];
        }
      }
    }
  }
}

void conv1d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> grad_y,
                            std::span<double> grad_w) {
  check_sizes(s, x.size(), grad_w.size(), grad_y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const auto jobs = static_cast<std::int64_t>(s.out_channels * cin_g);

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::size_t o = static_cast<std::size_t>(job) / cin_g;
    const std::size_t il = static_cast<std::size_t>(job) % cin_g;
    const std::size_t ci = (o / cout_g) * cin_g + il;
    double* gw = grad_w.data() + (o * cin_g + il) * s.kernel_size;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const double* in = x.data() + (b * s.in_channels + ci) * s.in_length;
      const double* gy = grad_y.data() + (b * s.out_channels + o) * frames;
      for (std::size_t k = 0; k < s.kernel_size; ++k) {
        const auto r = valid_frames(s, k, frames);
        double acc = 0.0;
        for (std::size_t t = r.begin; t < r.end; ++t) acc += gy[t] * in[t * s.stride + k - s.padding];
        gw[k] += acc;
      }
    }
  }
}

namespace serial {

namespace {

// Input sample read by output frame t at tap k, or -1 when it falls in the padding.
std::ptrdiff_t source_index(const ConvShape& s, std::size_t t, std::size_t k) {
  const auto pos = static_cast<std::ptrdiff_t>(t * s.stride + k) - static_cast<std::ptrdiff_t>(s.padding);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_length)) return -1;
  return pos;
}

}  // namespace

void conv1d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w, std::span<double> y) {
  check_sizes(s, x.size(), w.size(), y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t t = 0; t < frames; ++t) {
        double acc = 0.0;
        for (std::size_t il = 0; il < cin_g; ++il) {
          const std::size_t ci = g * cin_g + il;
          for (std::size_t k = 0; k < s.kernel_size; ++k) {
            const auto pos = source_index(s, t, k);
            if (pos < 0) continue;
            acc += w[(o * cin_g + il) * s.kernel_size + k] *
                   x[(b * s.in_channels + ci) * s.in_length + static_cast<std::size_t>(pos)];
          }
        }
        y[(b * s.out_channels + o) * frames + t] = acc;
      }
    }
  }
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_y, std::span<const double> w,
                           std::span<double> grad_x) {
  check_sizes(s, grad_x.size(), w.size(), grad_y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t t = 0; t < frames; ++t) {
        const double gv = grad_y[(b * s.out_channels + o) * frames + t];
        for (std::size_t il = 0; il < cin_g; ++il) {
          const std::size_t ci = g * cin_g + il;
          for (std::size_t k = 0; k < s.kernel_size; ++k) {
            const auto pos = source_index(s, t, k);
            if (pos < 0) continue;
            grad_x[(b * s.in_channels + ci) * s.in_length + static_cast<std::size_t>(pos)] +=
                gv * w[(o * cin_g + il) * s.kernel_size + k];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> grad_y,
                            std::span<double> grad_w) {
  check_sizes(s, x.size(), grad_w.size(), grad_y.size());
  const std::size_t frames = s.out_length();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t t = 0; t < frames; ++t) {
        const double gv = grad_y[(b * s.out_channels + o) * frames + t];
        for (std::size_t il = 0; il < cin_g; ++il) {
          const std::size_t ci = g * cin_g + il;
          for (std::size_t k = 0; k < s.kernel_size; ++k) {
            const auto pos = source_index(s, t, k);
            if (pos < 0) continue;
            grad_w[(o * cin_g + il) * s.kernel_size + k] +=
                gv * x[(b * s.in_channels + ci) * s.in_length + static_cast<std::size_t>(pos)];
          }
        }
      }
    }
  }
}

}  // namespace serial

}  // namespace sfi::kernels
