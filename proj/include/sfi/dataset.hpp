#pragma once

// Reproducible synthetic dataset: per-split scene generation, on-disk layout,
// manifest, and resampled test variants.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sfi/scene.hpp"

namespace sfi {

enum class Split { train, validation, test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);  // "train" | "validation" | "val" | "test"

struct SplitCounts {
  std::array<std::size_t, kMaxSources> per_n{};  // per_n[n - 1] scenes with n sources
  std::size_t total() const;
};

struct DatasetSpec {
  SplitCounts train{{128, 128, 128, 128}};
  SplitCounts validation{{16, 16, 16, 16}};
  SplitCounts test{{32, 32, 32, 32}};
  int fs = 8000;
  double duration_seconds = 1.0;
  std::uint64_t seed = 0;

  const SplitCounts& counts(Split split) const;
};

struct SceneRecord {
  std::string id;
  Split split = Split::train;
  Scene scene;
};

// Scene seed depends only on (spec.seed, split, index within split).
std::uint64_t scene_seed(std::uint64_t dataset_seed, Split split, std::size_t index);

// Scenes are ordered by N, then index; ids are "<split>_<index:05>".
std::vector<SceneRecord> generate_split(const DatasetSpec& spec, Split split);

// Writes <root>/<split>/<id>/{mixture,source_1..N}.wav (float32) for every
// split with nonzero counts and one manifest.jsonl record per scene. A split
// that is written replaces its previous files and records; manifest records
// of the other splits are kept.
// `extra_test_fs` adds test variants resampled with the best tier, written as
// mixture_fs<fs>.wav / source_<n>_fs<fs>.wav. Returns the number of scenes.
std::size_t write_dataset(const std::filesystem::path& root, const DatasetSpec& spec,
                          const std::vector<int>& extra_test_fs = {});

// Loads a split from disk. fs == 0 selects the native files; otherwise the
// resampled variant with that suffix, or a best-tier resampling of the native
// files when that variant is absent. Mixtures are recomputed as the sum of the
// loaded sources.
std::vector<SceneRecord> load_split(const std::filesystem::path& root, Split split, int fs = 0);

// Resamples every source with the best tier and remixes.
Scene resample_scene(const Scene& scene, int fs);

// Stable 64-bit hash over all waveforms of the given records.
std::uint64_t dataset_hash(const std::vector<SceneRecord>& records);

}  // namespace sfi
