#include "sfi/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sfi/errors.hpp"
#include "sfi/random.hpp"
#include "sfi/resampler.hpp"
#include "sfi/wav.hpp"

namespace sfi {

namespace fs = std::filesystem;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  throw std::invalid_argument(fmt::format("unknown split '{}'", name));
}

std::size_t SplitCounts::total() const {
  std::size_t t = 0;
  for (auto c : per_n) t += c;
  return t;
}

const SplitCounts& DatasetSpec::counts(Split split) const {
  switch (split) {
    case Split::train: return train;
    case Split::validation: return validation;
    case Split::test: return test;
  }
  return train;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, Split split, std::size_t index) {
  return Rng::mix(Rng::mix(dataset_seed, static_cast<std::uint64_t>(split) + 1), index);
}

std::vector<SceneRecord> generate_split(const DatasetSpec& spec, Split split) {
  const SplitCounts& counts = spec.counts(split);
  std::vector<SceneRecord> records(counts.total());
  std::vector<std::size_t> n_of(records.size());
  std::size_t k = 0;
  for (std::size_t n = 1; n <= kMaxSources; ++n)
    for (std::size_t i = 0; i < counts.per_n[n - 1]; ++i) n_of[k++] = n;

  const auto count = static_cast<long long>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    auto& r = records[idx];
    r.id = fmt::format("{}_{:05}", split_name(split), idx);
    r.split = split;
    r.scene = synthesize_scene(scene_seed(spec.seed, split, idx), n_of[idx], spec.fs, spec.duration_seconds);
  }
  return records;
}

namespace {

std::string suffix(int fs) { return fs == 0 ? std::string() : fmt::format("_fs{}", fs); }

void write_scene_files(const fs::path& dir, const Scene& scene, int fs_tag) {
  save_wav(dir / fmt::format("mixture{}.wav", suffix(fs_tag)), scene.mixture, scene.fs);
  for (std::size_t n = 0; n < scene.n_sources(); ++n)
    save_wav(dir / fmt::format("source_{}{}.wav", n + 1, suffix(fs_tag)), scene.sources[n], scene.fs);
}

}  // namespace

Scene resample_scene(const Scene& scene, int fs) {
  if (fs == scene.fs) return scene;
  Scene out;
  out.fs = fs;
  out.seed = scene.seed;
  for (const auto& s : scene.sources) out.sources.push_back(resample(s, scene.fs, fs, ResampleQuality::best()));
  remix(out);
  return out;
}

std::size_t write_dataset(const fs::path& root, const DatasetSpec& spec, const std::vector<int>& extra_test_fs) {
  fs::create_directories(root);
  std::vector<std::string> kept;
  if (std::ifstream previous(root / "manifest.jsonl"); previous) {
    for (std::string line; std::getline(previous, line);) {
      if (line.empty()) continue;
      const auto split = parse_split(nlohmann::json::parse(line).at("split").get<std::string>());
      if (spec.counts(split).total() == 0) kept.push_back(line);
    }
  }
  std::ofstream manifest(root / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + (root / "manifest.jsonl").string());
  for (const auto& line : kept) manifest << line << '\n';

  std::size_t written = 0;
  for (Split split : {Split::train, Split::validation, Split::test}) {
    if (spec.counts(split).total() == 0) continue;
    fs::remove_all(root / split_name(split));
    const auto records = generate_split(spec, split);
    for (const auto& r : records) {
      const fs::path dir = root / split_name(split) / r.id;
      fs::create_directories(dir);
      write_scene_files(dir, r.scene, 0);
      if (split == Split::test)
        for (int f : extra_test_fs)
          if (f != spec.fs) write_scene_files(dir, resample_scene(r.scene, f), f);
      const nlohmann::json rec = {{"id", r.id},       {"split", split_name(split)},
                                  {"N", r.scene.n_sources()}, {"fs", spec.fs},
                                  {"duration", spec.duration_seconds}, {"seed", r.scene.seed}};
      manifest << rec.dump() << '\n';
      ++written;
    }
  }
  if (!manifest) throw std::runtime_error("write failed for manifest.jsonl");
  return written;
}

std::vector<SceneRecord> load_split(const fs::path& root, Split split, int fs) {
  std::ifstream manifest(root / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot open " + (root / "manifest.jsonl").string());
  std::vector<SceneRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("manifest.jsonl line {}: {}", line_no, e.what()));
    }
    if (parse_split(rec.at("split").get<std::string>()) != split) continue;

    SceneRecord r;
    r.id = rec.at("id").get<std::string>();
    r.split = split;
    const auto n = rec.at("N").get<std::size_t>();
    const int native_fs = rec.at("fs").get<int>();
    const fs::path dir = root / split_name(split) / r.id;
    const bool variant = fs != 0 && fs != native_fs && fs::exists(dir / fmt::format("mixture{}.wav", suffix(fs)));
    const int tag = variant ? fs : 0;
    for (std::size_t k = 1; k <= n; ++k) {
      WavData w = load_wav(dir / fmt::format("source_{}{}.wav", k, suffix(tag)));
      if (fs != 0 && w.fs != fs) w.samples = resample(w.samples, w.fs, fs, ResampleQuality::best()), w.fs = fs;
      r.scene.fs = w.fs;
      r.scene.sources.push_back(std::move(w.samples));
    }
    r.scene.seed = rec.at("seed").get<std::uint64_t>();
    remix(r.scene);
    records.push_back(std::move(r));
  }
  return records;
}

std::uint64_t dataset_hash(const std::vector<SceneRecord>& records) {
  // FNV-1a over the raw bytes of every waveform, in record order.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
  };
  for (const auto& r : records) {
    feed(r.id.data(), r.id.size());
    for (const auto& s : r.scene.sources) feed(s.data(), s.size() * sizeof(double));
    feed(r.scene.mixture.data(), r.scene.mixture.size() * sizeof(double));
  }
  return h;
}

}  // namespace sfi
