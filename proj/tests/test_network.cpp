#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "sfi/errors.hpp"
#include "sfi/network.hpp"
#include "sfi/scene.hpp"
#include "sfi/training.hpp"
#include "test_util.hpp"

using namespace sfi;
using std::numbers::pi;

namespace {

ModelConfig toy(std::size_t blocks = 1) {
  ModelConfig c;
  c.channels = 4;
  c.bottleneck = 4;
  c.expansion = 4;
  c.blocks = blocks;
  c.sources = 2;
  c.kernel_size = 8;
  c.stride = 4;
  c.grid_size = 32;
  c.seed = 3;
  return c;
}

std::vector<double> flat_parameters(SeparationModel& m) {
  std::vector<double> out;
  for (const auto& p : m.named_parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST(ModelConfig, RejectsInvalid) {
  ModelConfig c;
  c.stride = 15;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.sources = 0;
  EXPECT_THROW(SeparationModel{c}, std::invalid_argument);
}

TEST(BuildModel, SameSeedBitIdentical) {
  SeparationModel a(ModelConfig{}), b(ModelConfig{});
  EXPECT_EQ(flat_parameters(a), flat_parameters(b));
  ModelConfig other;
  other.seed = 1;
  SeparationModel c(other);
  EXPECT_NE(flat_parameters(a), flat_parameters(c));
}

TEST(BuildModel, SigmaStartsAtFiftyPi) {
  SeparationModel m(ModelConfig{});
  for (const auto* layer : {static_cast<const SfiFilterLayer*>(&m.encoder()), static_cast<const SfiFilterLayer*>(&m.decoder())})
    for (const auto& p : layer->bank().params) EXPECT_NEAR(p.sigma, 50 * pi, 1e-9);
}

TEST(BuildModel, CentersLinearlySpaced) {
  ModelConfig c;
  c.channels = 4;
  SeparationModel m(c);
  const double want[] = {2000 * pi, 4000 * pi, 6000 * pi, 8000 * pi};
  const auto bank = m.encoder().bank();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(bank.params[i].mu, want[i], 1e-9);
  for (const auto& p : bank.params) {
    EXPECT_GE(p.phi, -pi);
    EXPECT_LT(p.phi, pi);
  }
}

TEST(UConvBlock, ShapePreserving) {
  SeparationModel m(toy());
  Rng rng(1);
  for (std::size_t t : {16u, 17u, 31u, 50u}) {
    const auto x = test::random_tensor(rng, {2, 4, t}, false);
    EXPECT_EQ(u_conv_block(m.mask_predictor().blocks[0], x).shape(), x.shape());
  }
}

TEST(UConvBlock, ZeroProjectionIsIdentity) {
  SeparationModel m(toy());
  auto block = m.mask_predictor().blocks[0];
  for (auto& v : block.project.weight.mutable_data()) v = 0.0;
  for (auto& v : block.project.bias.mutable_data()) v = 0.0;
  Rng rng(2);
  const auto x = test::random_tensor(rng, {1, 4, 20}, false);
  const auto y = u_conv_block(block, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(UConvBlock, RejectsShortInput) {
  SeparationModel m(toy());
  EXPECT_THROW(u_conv_block(m.mask_predictor().blocks[0], ad::Tensor::zeros({1, 4, 15})), std::invalid_argument);
}

TEST(UConvBlock, GradientMatchesFiniteDifferences) {
  SeparationModel m(toy());
  Rng rng(3);
  const auto& block = m.mask_predictor().blocks[0];
  auto x = test::random_tensor(rng, {1, 4, 32});
  const auto probe = test::random_tensor(rng, {1, 4, 32}, false);
  std::vector<ad::Tensor> inputs{x, block.expand.weight, block.depthwise_weight[2], block.depthwise_act[3].gain,
                                 block.project.weight};
  const auto errors = test::gradient_errors(
      [&] { return ad::sum(ad::mul(u_conv_block(block, x), probe)); }, inputs);
  for (double e : errors) EXPECT_LE(e, 1e-4);
}

TEST(PredictMasks, NonnegativeWithExpectedShape) {
  SeparationModel m(toy());
  Rng rng(4);
  const auto v = test::random_tensor(rng, {3, 4, 20}, false);
  const auto masks = m.predict_masks(v);
  EXPECT_EQ(masks.shape(), (ad::Shape{6, 4, 20}));
  for (double x : masks.data()) EXPECT_GE(x, 0.0);
}

TEST(PredictMasks, ZeroBlocksStillValid) {
  SeparationModel m(toy(0));
  Rng rng(5);
  const auto masks = m.predict_masks(test::random_tensor(rng, {1, 4, 3}, false));
  EXPECT_EQ(masks.shape(), (ad::Shape{2, 4, 3}));
}

TEST(Separate, CountAndLength) {
  SeparationModel m(ModelConfig{});
  Rng rng(6);
  const auto x = test::random_vector(rng, 4000);
  const auto out = m.separate(x, 8000);
  ASSERT_EQ(out.size(), 4u);
  for (const auto& y : out) EXPECT_EQ(y.size(), 4000u);
  const auto out4 = m.separate(test::random_vector(rng, 2001), 4000);
  for (const auto& y : out4) EXPECT_EQ(y.size(), 2001u);
}

TEST(Separate, SecondCallHitsCache) {
  SeparationModel m(ModelConfig{});
  const std::vector<double> x(2000, 0.1);
  m.separate(x, 8000);
  const auto gen = m.encoder().cache().generation_count() + m.decoder().cache().generation_count();
  m.separate(x, 8000);
  EXPECT_EQ(m.encoder().cache().generation_count() + m.decoder().cache().generation_count(), gen);
  EXPECT_GE(m.encoder().cache().hit_count(), 1u);
}

TEST(Separate, PaperGeometryAtEightKilohertz) {
  ModelConfig c;
  c.fs_train = 48000;
  c.kernel_size = 240;
  c.stride = 120;
  c.grid_size = 960;
  c.channels = 4;
  c.blocks = 1;
  SeparationModel m(c);
  m.separate(std::vector<double>(1600, 0.1), 8000);
  const auto k = m.encoder().cache().find(8000);
  ASSERT_NE(k, nullptr);
  EXPECT_EQ(k->geometry.kernel_size, 40u);
  EXPECT_EQ(k->geometry.stride, 20u);
}

TEST(Separate, MaskShapesAgreeAcrossRates) {
  SeparationModel m(ModelConfig{});
  std::size_t t8 = 0, t4 = 0;
  m.encoder().encode(std::vector<double>(8000, 0.1), 8000, &t8);
  m.encoder().encode(std::vector<double>(4000, 0.1), 4000, &t4);
  EXPECT_EQ(t8, t4);
}

TEST(Separate, PureFunction) {
  SeparationModel m(ModelConfig{});
  Rng rng(7);
  const auto x = test::random_vector(rng, 3000);
  EXPECT_EQ(m.separate(x, 6000), m.separate(x, 6000));
}

TEST(Separate, UnsupportedRate) {
  SeparationModel m(ModelConfig{});
  EXPECT_THROW(m.separate(std::vector<double>(3000, 0.1), 44100), UnsupportedSamplingFrequency);
}

TEST(Network, FullToyGradientMatchesFiniteDifferences) {
  SeparationModel m(toy());
  const Scene scene = synthesize_scene(5, 2, 8000, 0.04);
  const std::vector<Scene> batch{scene};
  const auto x = ad::Tensor::from({1, 1, scene.length()}, scene.mixture);
  auto loss = [&] {
    m.parameters_changed();
    return batch_pit_loss(m.forward_trainable(x), batch);
  };
  std::vector<ad::Tensor> params;
  for (const auto& p : m.named_parameters()) params.push_back(p.tensor);
  const auto errors = test::gradient_errors(loss, params, 1e-5);
  const auto names = m.named_parameters();
  for (std::size_t i = 0; i < errors.size(); ++i) EXPECT_LE(errors[i], 1e-4) << names[i].name;

  // Gradient reaches the latent filter parameters with nonzero values.
  for (const auto& p : names) {
    if (!p.name.ends_with(".mgf")) continue;
    double g = 0.0;
    for (double v : p.tensor.grad()) g += std::abs(v);
    EXPECT_GT(g, 0.0) << p.name;
  }
}

TEST(Checkpoint, RoundTrip) {
  ModelConfig c = toy(2);
  c.seed = 9;
  SeparationModel m(c);
  const auto path = std::filesystem::temp_directory_path() / "sfi_ckpt_test.ckpt";
  save_checkpoint(path, m);
  SeparationModel back = load_checkpoint(path);
  EXPECT_EQ(back.config().channels, c.channels);
  EXPECT_EQ(back.config().blocks, 2u);
  const auto a = m.named_parameters();
  const auto b = back.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    for (std::size_t k = 0; k < a[i].tensor.size(); ++k) {
      if (a[i].name.ends_with(".mgf"))
        EXPECT_EQ(a[i].tensor.data()[k], b[i].tensor.data()[k]);
      else
        EXPECT_EQ(static_cast<float>(a[i].tensor.data()[k]), b[i].tensor.data()[k]);
    }
  }
}

TEST(Checkpoint, CorruptFileIsFormatError) {
  const auto path = std::filesystem::temp_directory_path() / "sfi_ckpt_bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACHECKPOINT";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);

  SeparationModel m(toy());
  save_checkpoint(path, m);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
