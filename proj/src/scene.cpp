#include "sfi/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sfi/random.hpp"

namespace sfi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Band {
  double lo;
  double hi;
};

Signal tone_complex(Rng& rng, Band band, std::size_t length, int fs) {
  Signal y(length, 0.0);
  const auto partials = 2 + rng.index(4);
  for (std::uint64_t p = 0; p < partials; ++p) {
    const double f = rng.uniform(band.lo, band.hi);
    const double amp = rng.uniform(0.3, 1.0);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double w = kTwoPi * f / fs;
    for (std::size_t t = 0; t < length; ++t) y[t] += amp * std::sin(w * static_cast<double>(t) + phase);
  }
  return y;
}

// Dense random-phase sinusoid sum; its spectrum stays inside the band.
Signal noise_burst(Rng& rng, Band band, std::size_t length, int fs) {
  constexpr int kComponents = 40;
  Signal y(length, 0.0);
  for (int p = 0; p < kComponents; ++p) {
    const double f = rng.uniform(band.lo, band.hi);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double w = kTwoPi * f / fs;
    for (std::size_t t = 0; t < length; ++t) y[t] += std::sin(w * static_cast<double>(t) + phase);
  }
  return y;
}

Signal chirp(Rng& rng, Band band, std::size_t length, int fs) {
  const double f0 = rng.uniform(band.lo, band.hi);
  const double f1 = rng.uniform(band.lo, band.hi);
  const double phase = rng.uniform(0.0, kTwoPi);
  const double dur = static_cast<double>(length) / fs;
  Signal y(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double s = static_cast<double>(t) / fs;
    y[t] = std::sin(kTwoPi * (f0 * s + 0.5 * (f1 - f0) / dur * s * s) + phase);
  }
  return y;
}

void apply_ramps(Signal& y, std::size_t ramp) {
  ramp = std::min(ramp, y.size() / 2);
  for (std::size_t t = 0; t < ramp; ++t) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(t) + 0.5) / static_cast<double>(ramp));
    y[t] *= g;
    y[y.size() - 1 - t] *= g;
  }
}

}  // namespace

void remix(Scene& scene) {
  scene.mixture.assign(scene.sources.empty() ? 0 : scene.sources.front().size(), 0.0);
  for (const auto& s : scene.sources) {
    if (s.size() != scene.mixture.size()) throw std::invalid_argument("remix: sources differ in length");
    for (std::size_t t = 0; t < s.size(); ++t) scene.mixture[t] += s[t];
  }
}

Scene synthesize_scene(std::uint64_t seed, std::size_t n_sources, int fs, double duration_seconds,
                       const SceneOptions& options) {
  if (n_sources < 1 || n_sources > kMaxSources)
    throw std::invalid_argument("synthesize_scene: n_sources must be in 1..4");
  if (!(duration_seconds > 0.0)) throw std::invalid_argument("synthesize_scene: duration must be positive");
  if (fs <= 0) throw std::invalid_argument("synthesize_scene: fs must be positive");

  std::vector<Band> bands;
  for (std::size_t k = 0; k < options.band_count; ++k) {
    const double lo = options.lowest_band_hz * std::ldexp(1.0, static_cast<int>(k));
    if (2.0 * lo >= 0.5 * fs) break;
    bands.push_back({lo, 2.0 * lo});
  }
  if (bands.size() < n_sources)
    throw std::invalid_argument("synthesize_scene: fewer octave bands below Nyquist than sources");

  const auto length = static_cast<std::size_t>(std::llround(duration_seconds * fs));
  if (length == 0) throw std::invalid_argument("synthesize_scene: clip shorter than one sample");
  const auto ramp = static_cast<std::size_t>(std::llround(options.ramp_seconds * fs));

  Rng rng(seed);
  rng.shuffle(bands.begin(), bands.end());

  Scene scene;
  scene.fs = fs;
  scene.seed = seed;
  scene.sources.reserve(n_sources);
  for (std::size_t n = 0; n < n_sources; ++n) {
    std::size_t onset = 0;
    std::size_t span = length;
    if (n > 0) {
      onset = static_cast<std::size_t>(rng.uniform(0.0, 0.5) * static_cast<double>(length));
      const auto min_span = std::max<std::size_t>(1, length / 4);
      const std::size_t max_span = length - onset;
      span = min_span >= max_span ? max_span
                                  : min_span + static_cast<std::size_t>(rng.index(max_span - min_span + 1));
    }
    Signal event;
    switch (rng.index(3)) {
      case 0: event = tone_complex(rng, bands[n], span, fs); break;
      case 1: event = noise_burst(rng, bands[n], span, fs); break;
      default: event = chirp(rng, bands[n], span, fs); break;
    }
    apply_ramps(event, ramp);
    double peak = 0.0;
    for (double v : event) peak = std::max(peak, std::abs(v));
    const double g = peak > 0.0 ? options.peak / peak : 0.0;

    Signal source(length, 0.0);
    for (std::size_t t = 0; t < span; ++t) source[onset + t] = g * event[t];
    scene.sources.push_back(std::move(source));
  }
  remix(scene);
  return scene;
}

std::vector<Scene> augment_batch(const std::vector<Scene>& batch, std::uint64_t seed, const AugmentOptions& options,
                                 std::vector<AugmentRecord>* log) {
  if (batch.empty()) throw std::invalid_argument("augment_batch: empty batch");
  const int fs = batch.front().fs;
  const std::size_t length = batch.front().length();
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].fs != fs) throw std::invalid_argument("augment_batch: scenes have different sampling rates");
    if (batch[i].length() != length) throw std::invalid_argument("augment_batch: scenes have different lengths");
    for (std::size_t s = 0; s < batch[i].n_sources(); ++s) pool.emplace_back(i, s);
  }

  Rng rng(seed, 0xa9);
  if (options.shuffle) rng.shuffle(pool.begin(), pool.end());

  std::vector<Scene> out(batch.size());
  if (log) log->clear();
  std::size_t next = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i].fs = fs;
    out[i].seed = batch[i].seed;
    for (std::size_t s = 0; s < batch[i].n_sources(); ++s) {
      const auto [fi, fsl] = pool[next++];
      const double gain_db = options.max_gain_db > 0.0 ? rng.uniform(-options.max_gain_db, options.max_gain_db) : 0.0;
      const double g = std::pow(10.0, gain_db / 20.0);
      Signal src = batch[fi].sources[fsl];
      if (gain_db != 0.0)
        for (double& v : src) v *= g;
      out[i].sources.push_back(std::move(src));
      if (log) log->push_back({i, s, fi, fsl, gain_db});
    }
    remix(out[i]);
  }
  return out;
}

}  // namespace sfi
