#include "sfi/sfi_layers.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "sfi/errors.hpp"

namespace sfi {

std::size_t LayerGeometry::frames(std::size_t length) const {
  if (stride == 0 || length + 2 * padding < kernel_size) return 0;
  return (length + 2 * padding - kernel_size) / stride + 1;
}

LayerGeometry adjust_kernel_stride(std::size_t k_train, std::size_t s_train, int fs_train, int fs_target) {
  if (k_train == 0 || s_train == 0 || fs_train <= 0 || fs_target <= 0) {
    throw std::invalid_argument("adjust_kernel_stride: all arguments must be positive");
  }
  const auto num_k = static_cast<long long>(k_train) * fs_target;
  const auto num_s = static_cast<long long>(s_train) * fs_target;
  if (num_k % fs_train != 0) {
    throw UnsupportedSamplingFrequency(
        fs_target, "unsupported sampling frequency " + std::to_string(fs_target) + " Hz: kernel size " +
                       std::to_string(static_cast<double>(num_k) / fs_train) + " is not an integer");
  }
  if (num_s % fs_train != 0) {
    throw UnsupportedSamplingFrequency(
        fs_target, "unsupported sampling frequency " + std::to_string(fs_target) + " Hz: stride " +
                       std::to_string(static_cast<double>(num_s) / fs_train) + " is not an integer");
  }
  LayerGeometry g;
  g.kernel_size = static_cast<std::size_t>(num_k / fs_train);
  g.stride = static_cast<std::size_t>(num_s / fs_train);
  g.padding = 0;
  g.fs = fs_target;
  if (g.kernel_size == 0 || g.stride == 0) {
    throw UnsupportedSamplingFrequency(fs_target, "unsupported sampling frequency " + std::to_string(fs_target) +
                                                      " Hz: kernel size or stride rounds to zero");
  }
  return g;
}

std::shared_ptr<const CachedKernels> KernelCache::get_or_generate(int fs, const Factory& make) {
  std::promise<std::shared_ptr<const CachedKernels>> promise;
  Slot existing;
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(fs); it != entries_.end()) {
      ++hits_;
      existing = it->second;
    } else {
      entries_.emplace(fs, promise.get_future().share());
    }
  }
  // Waiting on another thread's generation happens outside the lock.
  if (existing.valid()) return existing.get();
  try {
    auto made = std::make_shared<const CachedKernels>(make());
    ++generations_;
    promise.set_value(made);
    return made;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    entries_.erase(fs);
    throw;
  }
}

std::shared_ptr<const CachedKernels> KernelCache::find(int fs) const {
  Slot slot;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(fs);
    if (it == entries_.end()) return nullptr;
    slot = it->second;
  }
  return slot.get();
}

void KernelCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
}

std::size_t KernelCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {

ad::Tensor bank_to_tensor(const AnalogFilterBank& bank, double omega_ref) {
  if (bank.channel_pairs() == 0) throw std::invalid_argument("SFI layer: empty filter bank");
  if (!bank.valid()) throw std::invalid_argument("SFI layer: invalid filter bank");
  std::vector<double> values;
  values.reserve(bank.channel_pairs() * 3);
  for (const auto& p : bank.params) {
    values.push_back(p.mu / omega_ref);
    values.push_back(p.sigma / omega_ref);
    values.push_back(p.phi);
  }
  return ad::Tensor::from({bank.channel_pairs(), 3}, std::move(values), true);
}

}  // namespace

SfiFilterLayer::SfiFilterLayer(const AnalogFilterBank& bank, SfiLayerConfig config)
    : config_(config), cache_(std::make_unique<KernelCache>()) {
  if (config_.kernel_size == 0 || config_.stride == 0 || config_.fs_train <= 0 || config_.grid_size < 2) {
    throw std::invalid_argument("SFI layer: invalid configuration");
  }
  params_ = bank_to_tensor(bank, omega_ref());
  std::vector<double> units;
  for (std::size_t c = 0; c < bank.channel_pairs(); ++c) units.insert(units.end(), {omega_ref(), omega_ref(), 1.0});
  to_rad_ = ad::Tensor::from({bank.channel_pairs(), 3}, std::move(units));
  train_designer_ = std::make_shared<const KernelDesigner>(config_.fs_train, config_.kernel_size, config_.grid_size);
}

AnalogFilterBank SfiFilterLayer::bank() const {
  AnalogFilterBank bank;
  const auto v = params_.data();
  const double w = omega_ref();
  for (std::size_t c = 0; c < channels(); ++c) bank.params.push_back({w * v[3 * c], w * v[3 * c + 1], v[3 * c + 2]});
  return bank;
}

LayerGeometry SfiFilterLayer::geometry(int fs) const {
  return adjust_kernel_stride(config_.kernel_size, config_.stride, config_.fs_train, fs);
}

std::shared_ptr<const CachedKernels> SfiFilterLayer::kernels(int fs) const {
  const LayerGeometry geom = geometry(fs);
  return cache_->get_or_generate(fs, [&] {
    CachedKernels entry;
    entry.geometry = geom;
    entry.kernels = generate_filterbank_weights(bank(), fs, geom.kernel_size, config_.grid_size);
    entry.kernels.stride = geom.stride;
    std::vector<double> w;
    w.reserve(channels() * geom.kernel_size);
    for (const auto& k : entry.kernels.kernels) w.insert(w.end(), k.taps.begin(), k.taps.end());
    entry.weights = ad::Tensor::from({channels(), 1, geom.kernel_size}, std::move(w));
    return entry;
  });
}

ad::Tensor SfiFilterLayer::trainable_weights() const {
  return ad::mgf_kernels(ad::mul(params_, to_rad_), train_designer_);
}

void SfiFilterLayer::invalidate() { cache_->clear(); }

void SfiFilterLayer::project_params() {
  auto v = params_.mutable_data();
  for (std::size_t c = 0; c < channels(); ++c) {
    v[3 * c] = std::max(v[3 * c], 0.0);
    v[3 * c + 1] = std::max(v[3 * c + 1], kMinSigma);
  }
}

namespace {

void require_signal(const ad::Tensor& x, std::size_t kernel_size, const char* who) {
  if (x.rank() != 3 || x.dim(1) != 1) throw std::invalid_argument(std::string(who) + ": expected B x 1 x L input");
  if (x.dim(2) < kernel_size) {
    throw std::invalid_argument(std::string(who) + ": signal length " + std::to_string(x.dim(2)) +
                                " is shorter than the kernel size " + std::to_string(kernel_size));
  }
}

}  // namespace

ad::Tensor SfiConv1d::forward(const ad::Tensor& x, int fs) const {
  const auto k = kernels(fs);
  require_signal(x, k->geometry.kernel_size, "SfiConv1d");
  return ad::relu(ad::conv1d(x, k->weights, k->geometry.stride, k->geometry.padding));
}

ad::Tensor SfiConv1d::forward_trainable(const ad::Tensor& x) const {
  require_signal(x, config().kernel_size, "SfiConv1d");
  return ad::relu(ad::conv1d(x, trainable_weights(), config().stride, 0));
}

std::vector<double> SfiConv1d::encode(std::span<const double> x, int fs, std::size_t* frames) const {
  ad::NoGradGuard no_grad;
  const auto input = ad::Tensor::from({1, 1, x.size()}, std::vector<double>(x.begin(), x.end()));
  const auto v = forward(input, fs);
  if (frames) *frames = v.dim(2);
  return {v.data().begin(), v.data().end()};
}

namespace {

void require_representation(const ad::Tensor& u, std::size_t channels, const char* who) {
  if (u.rank() != 3 || u.dim(1) != channels || u.dim(2) == 0) {
    throw std::invalid_argument(std::string(who) + ": expected B x " + std::to_string(channels) +
                                " x T input, got " + ad::to_string(u.shape()));
  }
}

}  // namespace

ad::Tensor SfiTransposedConv1d::forward(const ad::Tensor& u, int fs, std::size_t out_len) const {
  require_representation(u, channels(), "SfiTransposedConv1d");
  const auto k = kernels(fs);
  return ad::fit_length(ad::transposed_conv1d(u, k->weights, k->geometry.stride), out_len);
}

ad::Tensor SfiTransposedConv1d::forward_trainable(const ad::Tensor& u, std::size_t out_len) const {
  require_representation(u, channels(), "SfiTransposedConv1d");
  return ad::fit_length(ad::transposed_conv1d(u, trainable_weights(), config().stride), out_len);
}

std::vector<double> SfiTransposedConv1d::decode(std::span<const double> masked, std::size_t frames, int fs,
                                                std::size_t out_len) const {
  if (frames == 0 || masked.size() != channels() * frames) {
    throw std::invalid_argument("SfiTransposedConv1d::decode: representation is not C x T");
  }
  ad::NoGradGuard no_grad;
  const auto u = ad::Tensor::from({1, channels(), frames}, std::vector<double>(masked.begin(), masked.end()));
  const auto y = forward(u, fs, out_len);
  return {y.data().begin(), y.data().end()};
}

}  // namespace sfi
