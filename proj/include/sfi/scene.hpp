#pragma once

// Synthetic band-disjoint sound scenes and minibatch augmentation.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sfi/loss_metrics.hpp"

namespace sfi {

inline constexpr std::size_t kMaxSources = 4;

struct Scene {
  std::vector<Signal> sources;
  Signal mixture;  // elementwise sum of sources, summed in source order
  int fs = 0;
  std::uint64_t seed = 0;

  std::size_t n_sources() const { return sources.size(); }
  std::size_t length() const { return mixture.size(); }
};

struct SceneOptions {
  double lowest_band_hz = 125.0;  // lower edge of the lowest octave band
  std::size_t band_count = 4;     // octave bands [f, 2f], f = lowest * 2^k
  double peak = 0.25;             // per-source peak amplitude before mixing
  double ramp_seconds = 0.01;     // raised-cosine onset/offset
};

// Recomputes mixture as the ordered sum of the sources.
void remix(Scene& scene);

// N events, each in a distinct octave band: a tone complex, a band-limited
// noise burst, or a linear chirp. Source 1 spans the whole clip; the others
// have random onsets and lengths. Deterministic given the arguments.
Scene synthesize_scene(std::uint64_t seed, std::size_t n_sources, int fs, double duration_seconds,
                       const SceneOptions& options = {});

struct AugmentOptions {
  double max_gain_db = 5.0;  // gains drawn uniformly in [-max, +max] dB
  bool shuffle = true;       // permute sources across batch items
};

// Per-source record of what augment_batch did: source `slot` of item `item`
// now holds original source (from_item, from_slot) scaled by gain_db.
struct AugmentRecord {
  std::size_t item;
  std::size_t slot;
  std::size_t from_item;
  std::size_t from_slot;
  double gain_db;
};

// Shuffles source signals across the batch (each item keeps its source
// count), applies a random gain per source, and remixes.
std::vector<Scene> augment_batch(const std::vector<Scene>& batch, std::uint64_t seed,
                                 const AugmentOptions& options = {}, std::vector<AugmentRecord>* log = nullptr);

}  // namespace sfi
