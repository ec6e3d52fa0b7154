#pragma once

// Sampling-frequency-independent encoder and decoder layers.
//
// Each layer owns a bank of latent analog filters. For every input sampling
// frequency it adjusts (K, S) so the kernel duration and hop stay fixed in
// seconds, designs the discrete kernels once, and caches them.

#include <atomic>
#include <cstddef>
#include <future>
#include <map>
#include <memory>
#include <mutex>

#include "sfi/filter_design.hpp"
#include "sfi/tensor.hpp"

namespace sfi {

struct LayerGeometry {
  std::size_t kernel_size = 0;
  std::size_t stride = 0;
  std::size_t padding = 0;
  int fs = 0;

  // Frame count floor((L + 2P - K) / S + 1); 0 when L + 2P < K.
  std::size_t frames(std::size_t length) const;
};

// K_target = K_train * fs_target / fs_train (likewise S). Throws
// UnsupportedSamplingFrequency when either result is fractional.
LayerGeometry adjust_kernel_stride(std::size_t k_train, std::size_t s_train, int fs_train, int fs_target);

struct SfiLayerConfig {
  std::size_t kernel_size = 40;  // at fs_train
  std::size_t stride = 20;       // at fs_train
  int fs_train = 8000;
  std::size_t grid_size = 160;
};

// Kernels for one sampling frequency. Immutable once published.
struct CachedKernels {
  LayerGeometry geometry;
  KernelSet kernels;
  ad::Tensor weights;  // C x 1 x K, no history
};

// fs -> kernels with a publish-once contract: concurrent first requests for
// the same fs wait on a single generation.
class KernelCache {
 public:
  using Factory = std::function<CachedKernels()>;

  std::shared_ptr<const CachedKernels> get_or_generate(int fs, const Factory& make);
  std::shared_ptr<const CachedKernels> find(int fs) const;
  void clear();

  std::size_t size() const;
  std::size_t generation_count() const { return generations_.load(); }
  std::size_t hit_count() const { return hits_.load(); }

 private:
  using Slot = std::shared_future<std::shared_ptr<const CachedKernels>>;
  mutable std::mutex mutex_;
  std::map<int, Slot> entries_;
  std::atomic<std::size_t> generations_{0};
  std::atomic<std::size_t> hits_{0};
};

// Shared machinery of the encoder and the decoder: the latent filter
// parameters and the kernel cache.
//
// The trainable tensor holds rows (mu / w_ref, sigma / w_ref, phi) with
// w_ref = pi * fs_train, so optimizer steps are commensurate across the
// three parameters; bank() converts back to rad/s.
class SfiFilterLayer {
 public:
  static constexpr double kMinSigma = 1e-3;

  SfiFilterLayer(const AnalogFilterBank& bank, SfiLayerConfig config);

  const SfiLayerConfig& config() const { return config_; }
  std::size_t channels() const { return params_.dim(0); }
  AnalogFilterBank bank() const;
  double omega_ref() const { return 3.14159265358979323846 * config_.fs_train; }
  // Trainable C x 3 parameter tensor in w_ref units. Call invalidate() after mutating it.
  ad::Tensor& params() { return params_; }
  const ad::Tensor& params() const { return params_; }

  LayerGeometry geometry(int fs) const;
  // Cached kernels for fs (generated on first use).
  std::shared_ptr<const CachedKernels> kernels(int fs) const;
  // Differentiable kernels at the training sampling frequency.
  ad::Tensor trainable_weights() const;

  void invalidate();
  // Clamps mu >= 0 and sigma >= kMinSigma (w_ref units) after an update.
  void project_params();
  const KernelCache& cache() const { return *cache_; }

 private:
  SfiLayerConfig config_;
  ad::Tensor params_;
  ad::Tensor to_rad_;  // C x 3 constant (w_ref, w_ref, 1)
  std::shared_ptr<const KernelDesigner> train_designer_;
  std::unique_ptr<KernelCache> cache_;
};

// 1 x C SFI convolution followed by ReLU.
class SfiConv1d : public SfiFilterLayer {
 public:
  using SfiFilterLayer::SfiFilterLayer;

  // x: B x 1 x L at fs -> B x C x T (nonnegative). Uses cached kernels.
  ad::Tensor forward(const ad::Tensor& x, int fs) const;
  // Same at fs_train through the differentiable kernel generator.
  ad::Tensor forward_trainable(const ad::Tensor& x) const;
  // Single waveform -> C x T, row-major.
  std::vector<double> encode(std::span<const double> x, int fs, std::size_t* frames = nullptr) const;
};

// C x 1 SFI transposed convolution.
class SfiTransposedConv1d : public SfiFilterLayer {
 public:
  using SfiFilterLayer::SfiFilterLayer;

  // u: B x C x T at fs -> B x 1 x out_len (raw (T-1)S + K trimmed or zero-padded).
  ad::Tensor forward(const ad::Tensor& u, int fs, std::size_t out_len) const;
  ad::Tensor forward_trainable(const ad::Tensor& u, std::size_t out_len) const;
  // Single C x T representation -> waveform of out_len samples.
  std::vector<double> decode(std::span<const double> masked, std::size_t frames, int fs, std::size_t out_len) const;
};

}  // namespace sfi
