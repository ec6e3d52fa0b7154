#pragma once

// Per-scene multi-SF evaluation of the SFI model and the resampling baselines.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfi/dataset.hpp"
#include "sfi/network.hpp"

namespace sfi {

enum class Method { sfi, resample_best, resample_fast };

std::string_view method_name(Method method);  // "sfi" | "resample-best" | "resample-fast"
Method parse_method(std::string_view name);

struct EvalRow {
  std::string scene_id;
  std::size_t n_sources = 0;
  int fs = 0;
  Method method = Method::sfi;
  std::string metric;  // "si_sdr" (N = 1) or "delta_si_sdr" (N >= 2)
  double value = 0.0;  // mean over the scene's sources, dB; NaN when `error` is set
  std::optional<std::string> error;
};

// Rows for every scene x method, sorted by (scene_id, fs, method). Scenes
// must already be at `fs`. Errors from an unsupported SF become row-level
// error records.
std::vector<EvalRow> evaluate_scenes(const SeparationModel& model, const std::vector<SceneRecord>& scenes, int fs,
                                     const std::vector<Method>& methods);

struct SummaryRow {
  std::size_t n_sources = 0;
  int fs = 0;
  Method method = Method::sfi;
  std::string metric;
  std::size_t count = 0;  // finite values only
  double mean = 0.0;
  double stderr_ = 0.0;   // sample standard deviation / sqrt(count)
};

// One row per (N, fs, method) present in `rows`, in sorted order.
std::vector<SummaryRow> summarize(const std::vector<EvalRow>& rows);

// Mean value over the finite rows matching the filter; NaN when none match.
double mean_value(const std::vector<EvalRow>& rows, int fs, Method method,
                  std::optional<std::size_t> n_sources = std::nullopt);

void write_report(const std::filesystem::path& path, const std::vector<EvalRow>& rows);
std::vector<EvalRow> read_report(const std::filesystem::path& path);
void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace sfi
