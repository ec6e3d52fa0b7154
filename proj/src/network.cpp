#include "sfi/network.hpp"

#include "sfi/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sfi {

void ModelConfig::validate() const {
  if (channels == 0 || bottleneck == 0 || expansion == 0 || sources == 0 || kernel_size == 0 || stride == 0 ||
      fs_train <= 0 || grid_size < 2) {
    throw std::invalid_argument("ModelConfig: all sizes must be positive (and grid_size >= 2)");
  }
  if (kernel_size != 2 * stride) throw std::invalid_argument("ModelConfig: kernel_size must equal 2 * stride");
}

namespace {

constexpr double kInitialSigma = 50.0 * std::numbers::pi;
constexpr double kPreluInit = 0.25;

class Initializer {
 public:
  Initializer(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double uniform(double lo, double hi) { return rng_.uniform(lo, hi); }

  ad::Tensor fan_in(ad::Shape shape, std::size_t fan) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    std::vector<double> v(ad::element_count(shape));
    for (auto& x : v) x = rng_.uniform(-bound, bound);
    return ad::Tensor::from(std::move(shape), std::move(v), true);
  }

 private:
  Rng rng_;
};

// The decoder starts from the same bank as the encoder (a matched analysis and
// synthesis pair); the two drift apart only through training.
AnalogFilterBank initial_bank(const ModelConfig& cfg) {
  Initializer init(cfg.seed, 1);
  AnalogFilterBank bank;
  const double top = std::numbers::pi * cfg.fs_train;
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    MgfParams p;
    p.mu = top * static_cast<double>(c + 1) / static_cast<double>(cfg.channels);
    p.sigma = kInitialSigma;
    p.phi = init.uniform(-std::numbers::pi, std::numbers::pi);
    bank.params.push_back(p);
  }
  return bank;
}

SfiLayerConfig layer_config(const ModelConfig& cfg) {
  cfg.validate();
  return {cfg.kernel_size, cfg.stride, cfg.fs_train, cfg.grid_size};
}

PointwiseConv make_pointwise(Initializer& init, std::size_t in, std::size_t out) {
  return {init.fan_in({out, in, 1}, in), init.fan_in({out}, in)};
}

NormAct make_norm_act(std::size_t channels) {
  return {ad::Tensor::full({channels}, kPreluInit, true), ad::Tensor::full({channels}, 1.0, true),
          ad::Tensor::zeros({channels}, true)};
}

MaskPredictor make_mask_predictor(const ModelConfig& cfg) {
  Initializer init(cfg.seed, 3);
  MaskPredictor m;
  m.input = make_pointwise(init, cfg.channels, cfg.bottleneck);
  m.input_gain = ad::Tensor::full({cfg.bottleneck}, 1.0, true);
  m.input_bias = ad::Tensor::zeros({cfg.bottleneck}, true);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    UConvBlock block;
    block.expand = make_pointwise(init, cfg.bottleneck, cfg.expansion);
    block.expand_act = make_norm_act(cfg.expansion);
    for (std::size_t l = 0; l < kUConvLevels; ++l) {
      block.depthwise_weight[l] = init.fan_in({cfg.expansion, 1, kDepthwiseKernel}, kDepthwiseKernel);
      block.depthwise_bias[l] = init.fan_in({cfg.expansion}, kDepthwiseKernel);
      block.depthwise_act[l] = make_norm_act(cfg.expansion);
    }
    block.project = make_pointwise(init, cfg.expansion, cfg.bottleneck);
    m.blocks.push_back(std::move(block));
  }
  m.output = make_pointwise(init, cfg.bottleneck, cfg.sources * cfg.channels);
  return m;
}

ad::Tensor norm_act(const NormAct& na, const ad::Tensor& x) {
  return ad::global_layer_norm(ad::prelu(x, na.slope), na.gain, na.bias);
}

}  // namespace

ad::Tensor pointwise_conv(const PointwiseConv& conv, const ad::Tensor& x) {
  return ad::add_channel_bias(ad::conv1d(x, conv.weight), conv.bias);
}

ad::Tensor u_conv_block(const UConvBlock& block, const ad::Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("u_conv_block: expected B x C x T input");
  constexpr std::size_t kMinFrames = std::size_t{1} << (kUConvLevels - 1);
  if (x.dim(2) < kMinFrames) {
    throw std::invalid_argument("u_conv_block: need at least " + std::to_string(kMinFrames) + " frames, got " +
                                std::to_string(x.dim(2)));
  }
  const std::size_t width = block.depthwise_weight[0].dim(0);
  const ad::Tensor h = norm_act(block.expand_act, pointwise_conv(block.expand, x));

  // Level 0 keeps the resolution; each further level halves it (odd lengths round up).
  std::array<ad::Tensor, kUConvLevels> levels;
  ad::Tensor cur = h;
  for (std::size_t l = 0; l < kUConvLevels; ++l) {
    const std::size_t stride = l == 0 ? 1 : 2;
    cur = ad::conv1d(cur, block.depthwise_weight[l], stride, kDepthwiseKernel / 2, width);
    cur = norm_act(block.depthwise_act[l], ad::add_channel_bias(cur, block.depthwise_bias[l]));
    levels[l] = cur;
  }

  ad::Tensor up = levels[kUConvLevels - 1];
  for (std::size_t l = kUConvLevels - 1; l-- > 0;) {
    up = ad::add(levels[l], ad::fit_length(ad::upsample_nearest(up, 2), levels[l].dim(2)));
  }
  return ad::add(x, pointwise_conv(block.project, up));
}

SeparationModel::SeparationModel(const ModelConfig& cfg)
    : config_(cfg),
      encoder_(initial_bank(cfg), layer_config(cfg)),
      decoder_(initial_bank(cfg), layer_config(cfg)),
      masker_(make_mask_predictor(cfg)) {}

ad::Tensor SeparationModel::predict_masks(const ad::Tensor& v) const {
  if (v.rank() != 3 || v.dim(1) != config_.channels) {
    throw std::invalid_argument("predict_masks: expected B x " + std::to_string(config_.channels) +
                                " x T input, got " + ad::to_string(v.shape()));
  }
  ad::Tensor h = pointwise_conv(masker_.input, v);
  h = ad::global_layer_norm(h, masker_.input_gain, masker_.input_bias);
  for (const auto& block : masker_.blocks) h = u_conv_block(block, h);
  const ad::Tensor masks = ad::relu(pointwise_conv(masker_.output, h));
  // B x (M C) x T and (B M) x C x T share a layout.
  return ad::reshape(masks, {v.dim(0) * config_.sources, config_.channels, v.dim(2)});
}

template <typename Decode>
ad::Tensor SeparationModel::separate_representation(const ad::Tensor& v, std::size_t length,
                                                    Decode&& decode) const {
  const std::size_t batch = v.dim(0);
  const ad::Tensor masks = predict_masks(v);
  const ad::Tensor masked = ad::mul(ad::repeat_batch(v, config_.sources), masks);
  const ad::Tensor out = decode(masked);
  return ad::reshape(out, {batch, config_.sources, length});
}

ad::Tensor SeparationModel::forward(const ad::Tensor& mixture, int fs) const {
  const std::size_t length = mixture.dim(2);
  const ad::Tensor v = encoder_.forward(mixture, fs);
  return separate_representation(v, length,
                                 [&](const ad::Tensor& u) { return decoder_.forward(u, fs, length); });
}

ad::Tensor SeparationModel::forward_trainable(const ad::Tensor& mixture) const {
  const std::size_t length = mixture.dim(2);
  const ad::Tensor v = encoder_.forward_trainable(mixture);
  return separate_representation(v, length,
                                 [&](const ad::Tensor& u) { return decoder_.forward_trainable(u, length); });
}

std::vector<std::vector<double>> SeparationModel::separate(std::span<const double> mixture, int fs) const {
  ad::NoGradGuard no_grad;
  const auto x = ad::Tensor::from({1, 1, mixture.size()}, std::vector<double>(mixture.begin(), mixture.end()));
  const ad::Tensor y = forward(x, fs);
  std::vector<std::vector<double>> out(config_.sources);
  const std::size_t length = mixture.size();
  for (std::size_t m = 0; m < config_.sources; ++m) {
    out[m].assign(y.data().begin() + static_cast<std::ptrdiff_t>(m * length),
                  y.data().begin() + static_cast<std::ptrdiff_t>((m + 1) * length));
  }
  return out;
}

std::vector<NamedParameter> SeparationModel::named_parameters() {
  std::vector<NamedParameter> out;
  auto add = [&](std::string name, const ad::Tensor& t) { out.push_back({std::move(name), t}); };
  auto add_pointwise = [&](const std::string& prefix, const PointwiseConv& c) {
    add(prefix + ".weight", c.weight);
    add(prefix + ".bias", c.bias);
  };
  auto add_norm_act = [&](const std::string& prefix, const NormAct& n) {
    add(prefix + ".prelu", n.slope);
    add(prefix + ".gln_gain", n.gain);
    add(prefix + ".gln_bias", n.bias);
  };

  add("encoder.mgf", encoder_.params());
  add("decoder.mgf", decoder_.params());
  add_pointwise("masker.input", masker_.input);
  add("masker.input_norm.gln_gain", masker_.input_gain);
  add("masker.input_norm.gln_bias", masker_.input_bias);
  for (std::size_t b = 0; b < masker_.blocks.size(); ++b) {
    const auto& block = masker_.blocks[b];
    const std::string p = "masker.block" + std::to_string(b);
    add_pointwise(p + ".expand", block.expand);
    add_norm_act(p + ".expand_act", block.expand_act);
    for (std::size_t l = 0; l < kUConvLevels; ++l) {
      const std::string q = p + ".level" + std::to_string(l);
      add(q + ".weight", block.depthwise_weight[l]);
      add(q + ".bias", block.depthwise_bias[l]);
      add_norm_act(q + ".act", block.depthwise_act[l]);
    }
    add_pointwise(p + ".project", block.project);
  }
  add_pointwise("masker.output", masker_.output);
  return out;
}

std::vector<ad::Tensor> SeparationModel::parameters() {
  std::vector<ad::Tensor> out;
  for (auto& np : named_parameters()) out.push_back(np.tensor);
  return out;
}

void SeparationModel::parameters_changed() {
  encoder_.project_params();
  decoder_.project_params();
  encoder_.invalidate();
  decoder_.invalidate();
}

}  // namespace sfi
