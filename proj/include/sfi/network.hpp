#pragma once

// SFI SuDoRM-RF-style separator: SFI encoder -> mask predictor (stack of
// U-ConvBlocks) -> elementwise masking -> shared SFI decoder.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sfi/sfi_layers.hpp"
#include "sfi/tensor.hpp"

namespace sfi {

struct ModelConfig {
  std::size_t channels = 32;    // C, encoder/decoder filters
  std::size_t bottleneck = 16;  // C_b, mask-predictor width
  std::size_t expansion = 32;   // E, U-ConvBlock width
  std::size_t blocks = 2;       // B
  std::size_t sources = 4;      // M
  std::size_t kernel_size = 16;
  std::size_t stride = 8;
  int fs_train = 8000;
  std::size_t grid_size = 160;  // I
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

inline constexpr std::size_t kUConvLevels = 5;
inline constexpr std::size_t kDepthwiseKernel = 5;

struct PointwiseConv {
  ad::Tensor weight;  // out x in x 1
  ad::Tensor bias;    // out
};

// PReLU followed by global layer norm.
struct NormAct {
  ad::Tensor slope;
  ad::Tensor gain;
  ad::Tensor bias;
};

struct UConvBlock {
  PointwiseConv expand;  // C_b -> E
  NormAct expand_act;
  std::array<ad::Tensor, kUConvLevels> depthwise_weight;  // E x 1 x 5
  std::array<ad::Tensor, kUConvLevels> depthwise_bias;    // E
  std::array<NormAct, kUConvLevels> depthwise_act;
  PointwiseConv project;  // E -> C_b
};

struct MaskPredictor {
  PointwiseConv input;  // C -> C_b
  ad::Tensor input_gain;  // GLN after the input projection
  ad::Tensor input_bias;
  std::vector<UConvBlock> blocks;
  PointwiseConv output;  // C_b -> M * C
};

ad::Tensor pointwise_conv(const PointwiseConv& conv, const ad::Tensor& x);

// Shape-preserving five-level U-Net block with a residual connection.
// x: B x C_b x T with T >= 16.
ad::Tensor u_conv_block(const UConvBlock& block, const ad::Tensor& x);

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

class SeparationModel {
 public:
  // Deterministic given cfg.seed.
  explicit SeparationModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return config_; }
  SfiConv1d& encoder() { return encoder_; }
  const SfiConv1d& encoder() const { return encoder_; }
  SfiTransposedConv1d& decoder() { return decoder_; }
  const SfiTransposedConv1d& decoder() const { return decoder_; }
  MaskPredictor& mask_predictor() { return masker_; }
  const MaskPredictor& mask_predictor() const { return masker_; }

  // v: B x C x T  ->  (B * M) x C x T nonnegative masks; item b * M + m is mask m of batch item b.
  ad::Tensor predict_masks(const ad::Tensor& v) const;

  // mixture: B x 1 x L at fs  ->  B x M x L, using cached kernels for fs.
  ad::Tensor forward(const ad::Tensor& mixture, int fs) const;
  // Same at fs_train with kernels generated differentiably from the latent filters.
  ad::Tensor forward_trainable(const ad::Tensor& mixture) const;

  // Generates (or reuses) kernels for fs, adjusts (K, S), and returns M waveforms of length L.
  std::vector<std::vector<double>> separate(std::span<const double> mixture, int fs) const;

  std::vector<NamedParameter> named_parameters();
  std::vector<ad::Tensor> parameters();
  // Projects the latent filter parameters onto their valid set and drops
  // cached kernels; call after any parameter update.
  void parameters_changed();

 private:
  // Masks v and decodes each source; `decode` maps (B * M) x C x T to (B * M) x 1 x L.
  template <typename Decode>
  ad::Tensor separate_representation(const ad::Tensor& v, std::size_t length, Decode&& decode) const;

  ModelConfig config_;
  SfiConv1d encoder_;
  SfiTransposedConv1d decoder_;
  MaskPredictor masker_;
};

// Checkpoint: magic, u64 header length, JSON header (config + tensor manifest),
// then little-endian raw blobs (float32 for network weights, float64 for MGF parameters).
void save_checkpoint(const std::filesystem::path& path, SeparationModel& model);
SeparationModel load_checkpoint(const std::filesystem::path& path);

}  // namespace sfi
