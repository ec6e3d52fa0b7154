#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sfi/network.hpp"
#include "sfi/resampler.hpp"
#include "test_util.hpp"

using namespace sfi;

namespace {

std::vector<double> sine(double freq, int fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / fs);
  return x;
}

// SNR over the interior 90% of the samples.
double interior_snr(const std::vector<double>& got, const std::vector<double>& want) {
  const std::size_t lo = want.size() / 20, hi = want.size() - want.size() / 20;
  double s = 0.0, e = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += want[i] * want[i], e += (got[i] - want[i]) * (got[i] - want[i]);
  return 10.0 * std::log10(s / e);
}

double round_trip_snr(const ResampleQuality& q) {
  const auto x = sine(1000.0, 8000, 8000);
  const auto up = resample(x, 8000, 48000, q);
  const auto back = resample(up, 48000, 8000, q);
  return interior_snr(back, x);
}

}  // namespace

TEST(Resample, SameRateIsIdentity) {
  Rng rng(1);
  const auto x = test::random_vector(rng, 333);
  EXPECT_EQ(resample(x, 16000, 16000), x);
}

TEST(Resample, DcPassesWithUnityGain) {
  const std::vector<double> x(4000, 1.0);
  for (const auto& q : {ResampleQuality::best(), ResampleQuality::fast()})
    for (auto [a, b] : {std::pair{8000, 48000}, {48000, 8000}, {8000, 6000}, {6000, 8000}}) {
      const auto y = resample(x, a, b, q);
      for (std::size_t i = y.size() / 4; i < 3 * y.size() / 4; ++i) EXPECT_NEAR(y[i], 1.0, 1e-3);
    }
}

TEST(Resample, RoundTripSnrBestTier) { EXPECT_GE(round_trip_snr(ResampleQuality::best()), 60.0); }

TEST(Resample, RoundTripSnrFastTier) { EXPECT_GE(round_trip_snr(ResampleQuality::fast()), 30.0); }

TEST(Resample, BestTierMoreAccurateThanFast) {
  EXPECT_GT(round_trip_snr(ResampleQuality::best()), round_trip_snr(ResampleQuality::fast()));
}

TEST(Resample, BandLimitedContentPreserved) {
  // Content below 0.8 of the lower Nyquist survives a 16k -> 12k -> 16k trip.
  auto x = sine(1500.0, 16000, 16000);
  const auto y = sine(4100.0, 16000, 16000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.5 * y[i];
  const auto back = resample(resample(x, 16000, 12000), 12000, 16000);
  EXPECT_GE(interior_snr(back, x), 60.0);
}

TEST(Resample, OutputLengthIsCeiling) {
  EXPECT_EQ(resample(std::vector<double>(1001, 0.0), 8000, 6000).size(), 751u);  // ceil(750.75)
  EXPECT_EQ(resample(std::vector<double>(1000, 0.0), 8000, 48000).size(), 6000u);
  EXPECT_EQ(resample(std::vector<double>(7, 0.0), 48000, 8000).size(), 2u);
}

TEST(Resample, RejectsNonPositiveRates) {
  EXPECT_THROW(resample(std::vector<double>(10), 0, 8000), std::invalid_argument);
  EXPECT_THROW(resample(std::vector<double>(10), 8000, -1), std::invalid_argument);
}

TEST(Resample, Deterministic) {
  Rng rng(2);
  const auto x = test::random_vector(rng, 1234);
  EXPECT_EQ(resample(x, 8000, 6000, ResampleQuality::fast()), resample(x, 8000, 6000, ResampleQuality::fast()));
}

TEST(BaselineSeparate, TrainingRateMatchesDirectSeparation) {
  SeparationModel m(ModelConfig{});
  Rng rng(3);
  const auto x = test::random_vector(rng, 2000);
  const auto direct = m.separate(x, 8000);
  const auto base = baseline_separate(m, x, 8000, ResampleQuality::best());
  ASSERT_EQ(base.size(), direct.size());
  for (std::size_t k = 0; k < direct.size(); ++k)
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(base[k][i], direct[k][i], 1e-6);
}

TEST(BaselineSeparate, CountAndLengthAtOtherRate) {
  SeparationModel m(ModelConfig{});
  Rng rng(4);
  const auto x = test::random_vector(rng, 1501);
  const auto out = baseline_separate(m, x, 6000, ResampleQuality::fast());
  ASSERT_EQ(out.size(), 4u);
  for (const auto& y : out) EXPECT_EQ(y.size(), 1501u);
}

TEST(BaselineSeparate, OnlyTouchesTrainingRateCache) {
  SeparationModel m(ModelConfig{});
  const std::vector<double> x(1500, 0.2);
  m.separate(std::vector<double>(1000, 0.2), 4000);
  const auto before = m.encoder().cache().find(4000);
  baseline_separate(m, x, 6000, ResampleQuality::best());
  EXPECT_EQ(m.encoder().cache().find(4000), before);
  EXPECT_EQ(m.encoder().cache().find(6000), nullptr);
  EXPECT_NE(m.encoder().cache().find(8000), nullptr);
}
