#pragma once

// Latent analog filters and their conversion to discrete convolution kernels
// by least-squares approximation of the analog frequency response.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace sfi {

using Complex = std::complex<double>;

// Modulated Gaussian latent filter. Angular quantities are in rad/s.
struct MgfParams {
  double mu = 0.0;     // center angular frequency
  double sigma = 1.0;  // Gaussian width (sigma^2 is the variance)
  double phi = 0.0;    // initial phase, rad
};

bool is_valid(const MgfParams& p);

// G(w) = exp(-(w-mu)^2/(2 sigma^2) + j phi) + exp(-(w+mu)^2/(2 sigma^2) - j phi)
Complex eval_mgf(const MgfParams& p, double omega);

// Partial derivatives of Re G and Im G at omega with respect to (mu, sigma, phi).
struct MgfGradient {
  double re[3];
  double im[3];
};
MgfGradient eval_mgf_gradient(const MgfParams& p, double omega);

// One latent filter per (input, output) channel pair.
struct AnalogFilterBank {
  std::vector<MgfParams> params;

  std::size_t channel_pairs() const { return params.size(); }
  bool valid() const;
};

struct FrequencyGrid {
  double fs = 0.0;
  std::vector<double> omegas;  // ascending, omegas.front() == 0, omegas.back() == pi * fs

  std::size_t count() const { return omegas.size(); }
};

// I points uniformly covering [0, pi * fs] including both endpoints.
FrequencyGrid sample_frequency_grid(double fs, std::size_t count);

// I x K complex matrix with entry(i, k) = exp(j w_i (k + 1 - K/2) / fs), k 0-based.
class DesignMatrix {
 public:
  DesignMatrix(double fs, std::size_t rows, std::size_t kernel_size, std::vector<Complex> entries);

  double fs() const { return fs_; }
  std::size_t rows() const { return rows_; }
  std::size_t kernel_size() const { return kernel_size_; }
  const Complex& operator()(std::size_t i, std::size_t k) const { return entries_[i * kernel_size_ + k]; }

  // The real 2I x K matrix [Re D; Im D], row-major.
  std::vector<double> stacked() const;

 private:
  double fs_;
  std::size_t rows_;
  std::size_t kernel_size_;
  std::vector<Complex> entries_;
};

DesignMatrix build_design_matrix(const FrequencyGrid& grid, std::size_t kernel_size);

// Response sum_k b_k exp(j w (k + 1 - K/2) / fs) of an unreversed kernel b.
Complex kernel_response(std::span<const double> b, double fs, double omega);

// Moore-Penrose pseudo-inverse (K x 2I, row-major) of the stacked real design
// matrix. Singular values below 1e-10 * sigma_max are treated as zero.
std::vector<double> stacked_pseudo_inverse(const DesignMatrix& d);

// Real b minimizing ||G - D b||^2 (the raw solution, not time-reversed).
std::vector<double> solve_kernel(std::span<const Complex> target, const DesignMatrix& d);

// Precomputed solver for a fixed (fs, K, I): holds the grid and the stacked
// pseudo-inverse so repeated designs are a single matrix-vector product.
class KernelDesigner {
 public:
  KernelDesigner(double fs, std::size_t kernel_size, std::size_t grid_size);

  double fs() const { return grid_.fs; }
  std::size_t kernel_size() const { return kernel_size_; }
  const FrequencyGrid& grid() const { return grid_; }
  // K x 2I, row-major.
  std::span<const double> pseudo_inverse() const { return pinv_; }

  // Raw least-squares solution for a sampled target response.
  std::vector<double> solve(std::span<const Complex> target) const;
  // Time-reversed kernel for one latent filter, ready for use as conv weights.
  std::vector<double> design(const MgfParams& p) const;

 private:
  FrequencyGrid grid_;
  std::size_t kernel_size_;
  std::vector<double> pinv_;
};

struct Kernel {
  std::vector<double> taps;
};

struct KernelSet {
  double fs = 0.0;
  std::size_t kernel_size = 0;
  std::size_t stride = 0;  // filled in by the layer that owns the set; 0 if unknown
  std::size_t grid_size = 0;
  std::vector<Kernel> kernels;  // one per channel pair
};

KernelSet generate_filterbank_weights(const AnalogFilterBank& bank, double fs, std::size_t kernel_size,
                                      std::size_t grid_size);

// Writes `<stem>.csv` (channel,tap_index,value) and `<stem>.json` ({fs, K, S, I, generated_at}).
void write_kernel_dump(const std::filesystem::path& stem, const KernelSet& set);
KernelSet read_kernel_dump(const std::filesystem::path& stem);

}  // namespace sfi
