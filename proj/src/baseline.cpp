#include "sfi/network.hpp"
#include "sfi/resampler.hpp"

namespace sfi {

std::vector<std::vector<double>> baseline_separate(const SeparationModel& model, std::span<const double> x, int fs,
                                                   const ResampleQuality& quality) {
  const int fs_train = model.config().fs_train;
  const std::vector<double> at_train = resample(x, fs, fs_train, quality);
  auto outputs = model.separate(at_train, fs_train);
  for (auto& y : outputs) {
    y = resample(y, fs_train, fs, quality);
    y.resize(x.size(), 0.0);
  }
  return outputs;
}

}  // namespace sfi
