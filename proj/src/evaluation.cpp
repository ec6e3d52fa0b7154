#include "sfi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "sfi/errors.hpp"
#include "sfi/loss_metrics.hpp"
#include "sfi/resampler.hpp"

namespace sfi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Signal> run_method(const SeparationModel& model, const Scene& scene, Method method) {
  switch (method) {
    case Method::sfi: return model.separate(scene.mixture, scene.fs);
    case Method::resample_best: return baseline_separate(model, scene.mixture, scene.fs, ResampleQuality::best());
    case Method::resample_fast: return baseline_separate(model, scene.mixture, scene.fs, ResampleQuality::fast());
  }
  throw std::logic_error("run_method: unknown method");
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::sfi: return "sfi";
    case Method::resample_best: return "resample-best";
    case Method::resample_fast: return "resample-fast";
  }
  return "sfi";
}

Method parse_method(std::string_view name) {
  if (name == "sfi") return Method::sfi;
  if (name == "resample-best") return Method::resample_best;
  if (name == "resample-fast") return Method::resample_fast;
  throw std::invalid_argument(fmt::format("unknown method '{}'", name));
}

std::vector<EvalRow> evaluate_scenes(const SeparationModel& model, const std::vector<SceneRecord>& scenes, int fs,
                                     const std::vector<Method>& methods) {
  const std::size_t per_scene = methods.size();
  std::vector<EvalRow> rows(scenes.size() * per_scene);
  const auto count = static_cast<long long>(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    const auto& rec = scenes[static_cast<std::size_t>(i) / per_scene];
    const Method method = methods[static_cast<std::size_t>(i) % per_scene];
    EvalRow row;
    row.scene_id = rec.id;
    row.n_sources = rec.scene.n_sources();
    row.fs = fs;
    row.method = method;
    row.metric = row.n_sources == 1 ? "si_sdr" : "delta_si_sdr";
    try {
      if (rec.scene.fs != fs) throw std::invalid_argument(fmt::format("scene {} is at {} Hz", rec.id, rec.scene.fs));
      const auto outputs = run_method(model, rec.scene, method);
      row.value = eval_scene(outputs, rec.scene.sources, rec.scene.mixture).mean();
    } catch (const UnsupportedSamplingFrequency& e) {
      row.value = kNaN;
      row.error = e.what();
    }
    rows[static_cast<std::size_t>(i)] = std::move(row);
  }
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.scene_id, a.fs, a.method) < std::tie(b.scene_id, b.fs, b.method);
  });
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<EvalRow>& rows) {
  std::map<std::tuple<std::size_t, int, Method>, std::vector<double>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.n_sources, r.fs, r.method}];
    if (std::isfinite(r.value)) g.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    std::tie(s.n_sources, s.fs, s.method) = key;
    s.metric = s.n_sources == 1 ? "si_sdr" : "delta_si_sdr";
    s.count = values.size();
    if (values.empty()) {
      s.mean = s.stderr_ = kNaN;
    } else {
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.stderr_ = values.size() > 1
                      ? std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()))
                      : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double mean_value(const std::vector<EvalRow>& rows, int fs, Method method, std::optional<std::size_t> n_sources) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.fs != fs || r.method != method || !std::isfinite(r.value)) continue;
    if (n_sources && r.n_sources != *n_sources) continue;
    sum += r.value;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

void write_report(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "scene_id,n_sources,fs,method,metric,value\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{:.17g}\n", r.scene_id, r.n_sources, r.fs, method_name(r.method), r.metric,
                       r.value);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<EvalRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "scene_id,n_sources,fs,method,metric,value")
    throw FormatError(path.string() + ": header: unexpected columns");
  std::vector<EvalRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError(fmt::format("{}: line {}: expected 6 fields", path.string(), line_no));
    EvalRow r;
    r.scene_id = cells[0];
    r.n_sources = std::stoul(cells[1]);
    r.fs = std::stoi(cells[2]);
    r.method = parse_method(cells[3]);
    r.metric = cells[4];
    r.value = cells[5] == "nan" ? kNaN : std::stod(cells[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "n_sources,fs,method,metric,count,mean,stderr\n";
  for (const auto& s : rows)
    out << fmt::format("{},{},{},{},{},{:.6f},{:.6f}\n", s.n_sources, s.fs, method_name(s.method), s.metric, s.count,
                       s.mean, s.stderr_);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace sfi
