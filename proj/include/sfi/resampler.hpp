#pragma once

// Polyphase windowed-sinc resampling (Kaiser window) in two quality tiers,
// and the resample -> separate -> resample-back baseline.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace sfi {

class SeparationModel;

enum class ResampleTier { best, fast };

struct ResampleQuality {
  ResampleTier tier = ResampleTier::best;
  std::size_t zero_crossings = 64;  // per side
  double window_beta = 14.77;

  static ResampleQuality best() { return {ResampleTier::best, 64, 14.77}; }
  static ResampleQuality fast() { return {ResampleTier::fast, 16, 8.56}; }
};

// Output length is ceil(L * fs_out / fs_in). fs_in == fs_out returns the input unchanged.
std::vector<double> resample(std::span<const double> x, int fs_in, int fs_out,
                             const ResampleQuality& quality = ResampleQuality::best());

// Resample to the model's training rate, separate with the training-time
// geometry, and resample each output back to fs with length L.
std::vector<std::vector<double>> baseline_separate(const SeparationModel& model, std::span<const double> x, int fs,
                                                   const ResampleQuality& quality);

}  // namespace sfi
