#include "sfi/resampler.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sfi {

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

double kaiser(double x, double beta) {
  // x in [-1, 1]
  const double r = 1.0 - x * x;
  if (r <= 0.0) return r == 0.0 ? 1.0 / std::cyl_bessel_i(0.0, beta) : 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(r)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

std::vector<double> resample(std::span<const double> x, int fs_in, int fs_out, const ResampleQuality& quality) {
  if (fs_in <= 0 || fs_out <= 0) throw std::invalid_argument("resample: sampling rates must be positive");
  if (quality.zero_crossings == 0) throw std::invalid_argument("resample: zero_crossings must be positive");
  if (fs_in == fs_out) return {x.begin(), x.end()};

  const long long g = std::gcd(fs_in, fs_out);
  const long long up = fs_out / g;
  const long long down = fs_in / g;
  const auto in_len = static_cast<long long>(x.size());
  const long long out_len = (in_len * up + down - 1) / down;

  // Low-pass at min(fs_in, fs_out) / 2, expressed in input samples.
  const double ratio = std::min(1.0, static_cast<double>(fs_out) / fs_in);
  const double zc = static_cast<double>(quality.zero_crossings);
  const long long half = static_cast<long long>(std::ceil(zc / ratio));
  const long long taps = 2 * half;

  // table[phase][j] = h(phase/up - (j - half + 1)), j = 0..taps-1
  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (long long phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    for (long long j = 0; j < taps; ++j) {
      const double tau = frac - static_cast<double>(j - half + 1);
      const double arg = tau * ratio;
      table[static_cast<std::size_t>(phase * taps + j)] =
          std::abs(arg) > zc ? 0.0 : ratio * sinc(arg) * kaiser(arg / zc, quality.window_beta);
    }
  }

  std::vector<double> y(static_cast<std::size_t>(out_len));
#pragma omp parallel for schedule(static)
  for (long long n = 0; n < out_len; ++n) {
    const long long pos = n * down;
    const long long base = pos / up;
    const long long phase = pos % up;
    const double* h = table.data() + phase * taps;
    const long long first = base - half + 1;
    const long long j0 = std::max(0LL, -first);
    const long long j1 = std::min(taps, in_len - first);
    double acc = 0.0;
    for (long long j = j0; j < j1; ++j) acc += h[j] * x[static_cast<std::size_t>(first + j)];
    y[static_cast<std::size_t>(n)] = acc;
  }
  return y;
}

}  // namespace sfi
