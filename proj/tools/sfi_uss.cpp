// sfi-uss: dataset synthesis, training, separation, multi-SF evaluation and
// kernel inspection for the sampling-frequency-independent separator.
//
// Exit codes: 0 ok, 2 I/O or format error, 3 numeric failure, 4 unsupported SF.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "sfi/dataset.hpp"
#include "sfi/errors.hpp"
#include "sfi/evaluation.hpp"
#include "sfi/network.hpp"
#include "sfi/training.hpp"
#include "sfi/wav.hpp"

namespace fs = std::filesystem;
using namespace sfi;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitUnsupportedSf = 4;

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

// Flat JSON: ModelConfig fields, TrainConfig fields and data fields side by side.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DatasetSpec data;
};

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

RunConfig load_config(const Options& opt) {
  RunConfig cfg;
  if (!opt.config.empty()) {
    std::ifstream in(opt.config);
    if (!in) throw std::runtime_error("cannot open config " + opt.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(opt.config + ": " + e.what());
    }
    static const char* known[] = {"channels",   "bottleneck", "expansion",     "blocks",    "sources",
                                  "kernel_size", "stride",    "fs_train",      "grid_size", "seed",
                                  "epochs",     "batch_size", "learning_rate", "clip_norm", "augment",
                                  "max_gain_db", "fs",        "duration"};
    for (const auto& [key, _] : j.items()) {
      bool ok = false;
      for (const char* k : known) ok = ok || key == k;
      if (!ok) throw FormatError(fmt::format("{}: unknown key '{}'", opt.config, key));
    }
    take(j, "channels", cfg.model.channels);
    take(j, "bottleneck", cfg.model.bottleneck);
    take(j, "expansion", cfg.model.expansion);
    take(j, "blocks", cfg.model.blocks);
    take(j, "sources", cfg.model.sources);
    take(j, "kernel_size", cfg.model.kernel_size);
    take(j, "stride", cfg.model.stride);
    take(j, "fs_train", cfg.model.fs_train);
    take(j, "grid_size", cfg.model.grid_size);
    take(j, "epochs", cfg.train.epochs);
    take(j, "batch_size", cfg.train.batch_size);
    take(j, "learning_rate", cfg.train.learning_rate);
    take(j, "clip_norm", cfg.train.clip_norm);
    take(j, "augment", cfg.train.augment);
    take(j, "max_gain_db", cfg.train.max_gain_db);
    take(j, "fs", cfg.data.fs);
    take(j, "duration", cfg.data.duration_seconds);
    std::uint64_t seed = 0;
    if (j.contains("seed")) {
      take(j, "seed", seed);
      cfg.model.seed = cfg.train.seed = cfg.data.seed = seed;
    }
  }
  if (opt.seed) cfg.model.seed = cfg.train.seed = cfg.data.seed = *opt.seed;
  return cfg;
}

std::vector<Scene> scenes_of(const std::vector<SceneRecord>& records) {
  std::vector<Scene> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.scene);
  return out;
}

int cmd_synth(const Options& opt, const std::vector<std::size_t>& counts, const std::string& split_flag,
              const std::vector<int>& test_sf) {
  RunConfig cfg = load_config(opt);
  DatasetSpec spec = cfg.data;
  if (!counts.empty()) {
    if (counts.size() != kMaxSources) throw std::invalid_argument("--counts takes one value per N = 1..4");
    SplitCounts c;
    for (std::size_t n = 0; n < kMaxSources; ++n) c.per_n[n] = counts[n];
    spec.train = spec.validation = spec.test = SplitCounts{};
    switch (parse_split(split_flag)) {
      case Split::train: spec.train = c; break;
      case Split::validation: spec.validation = c; break;
      case Split::test: spec.test = c; break;
    }
  }
  const std::size_t n = write_dataset(opt.out, spec, test_sf);
  fmt::print("{} scenes written to {}\n", n, opt.out);
  return 0;
}

int train_one(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
  fs::create_directories(out);
  const auto train = scenes_of(load_split(data, Split::train));
  const auto val = scenes_of(load_split(data, Split::validation));
  if (train.empty()) throw std::runtime_error("no training scenes under " + data.string());

  SeparationModel model(cfg.model);
  Trainer trainer(model, cfg.train);
  const fs::path ckpt = out / "model.ckpt";
  std::ofstream log(out / "train_log.csv", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (out / "train_log.csv").string());
  log << "epoch,lr,train_loss,val_loss\n";

  double best = std::numeric_limits<double>::infinity();
  try {
    trainer.fit(train, val, [&](const EpochLog& e) {
      log << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", e.epoch, e.learning_rate, e.train_loss, e.val_loss) << std::flush;
      fmt::print("epoch {:3d}  lr {:.3g}  train {:.4f}  val {:.4f}\n", e.epoch, e.learning_rate, e.train_loss,
                 e.val_loss);
      const double score = std::isnan(e.val_loss) ? e.train_loss : e.val_loss;
      if (score < best) {
        best = score;
        save_checkpoint(ckpt, model);
      }
    });
  } catch (const NumericError&) {
    if (fs::exists(ckpt)) fmt::print(stderr, "last good checkpoint kept at {}\n", ckpt.string());
    throw;
  }
  fmt::print("checkpoint: {}\n", ckpt.string());
  return 0;
}

int cmd_train(const Options& opt, const std::string& data, const std::vector<std::uint64_t>& seeds,
              std::optional<std::size_t> epochs) {
  RunConfig cfg = load_config(opt);
  if (epochs) cfg.train.epochs = *epochs;
  if (seeds.empty()) return train_one(cfg, data, opt.out);
  for (std::uint64_t s : seeds) {
    RunConfig c = cfg;
    c.model.seed = c.train.seed = s;
    fmt::print("seed {}\n", s);
    train_one(c, data, fs::path(opt.out) / fmt::format("seed_{}", s));
  }
  return 0;
}

int cmd_separate(const Options& opt, const std::string& checkpoint, const std::string& input) {
  const SeparationModel model = load_checkpoint(checkpoint);
  const WavData wav = load_wav(input);
  const auto outputs = model.separate(wav.samples, wav.fs);
  fs::create_directories(opt.out);
  for (std::size_t m = 0; m < outputs.size(); ++m)
    save_wav(fs::path(opt.out) / fmt::format("source_{}.wav", m + 1), outputs[m], wav.fs, wav.format);
  fmt::print("{} outputs written to {}\n", outputs.size(), opt.out);
  return 0;
}

int cmd_eval(const Options& opt, const std::vector<std::string>& checkpoints, const std::string& data,
             const std::vector<int>& sfs, const std::vector<std::string>& method_names, std::string report,
             const std::string& split) {
  std::vector<Method> methods;
  for (const auto& m : method_names) methods.push_back(parse_method(m));
  std::vector<SeparationModel> models;
  for (const auto& c : checkpoints) models.push_back(load_checkpoint(c));
  if (report.empty()) report = (fs::path(opt.out.empty() ? "." : opt.out) / "report.csv").string();

  std::vector<EvalRow> rows;
  for (int f : sfs) {
    const auto scenes = load_split(data, parse_split(split), f);
    // Multiple checkpoints (one per training seed): per-scene values are averaged over them.
    std::vector<EvalRow> merged;
    for (std::size_t k = 0; k < models.size(); ++k) {
      auto r = evaluate_scenes(models[k], scenes, f, methods);
      if (k == 0) {
        merged = std::move(r);
        continue;
      }
      for (std::size_t i = 0; i < r.size(); ++i) merged[i].value += r[i].value;
    }
    for (auto& r : merged) {
      r.value /= static_cast<double>(models.size());
      if (r.error) fmt::print(stderr, "{} @ {} Hz [{}]: {}\n", r.scene_id, r.fs, method_name(r.method), *r.error);
    }
    rows.insert(rows.end(), merged.begin(), merged.end());
  }
  write_report(report, rows);
  fs::path summary = report;
  summary.replace_extension();
  summary += "_summary.csv";
  const auto sum = summarize(rows);
  write_summary(summary, sum);
  for (const auto& s : sum)
    fmt::print("N={} fs={:6d} {:14s} {:13s} {:8.3f} +/- {:.3f} (n={})\n", s.n_sources, s.fs, method_name(s.method),
               s.metric, s.mean, s.stderr_, s.count);
  fmt::print("report: {}\nsummary: {}\n", report, summary.string());
  return 0;
}

int cmd_dump_kernels(const Options& opt, const std::string& checkpoint, int sf, const std::string& layer) {
  const SeparationModel model = load_checkpoint(checkpoint);
  const SfiFilterLayer* source = nullptr;
  if (layer == "encoder")
    source = &model.encoder();
  else if (layer == "decoder")
    source = &model.decoder();
  else
    throw std::invalid_argument("--layer must be encoder or decoder");
  const auto cached = source->kernels(sf);
  const fs::path stem = opt.out.empty() ? fs::path(fmt::format("kernels_{}_fs{}", layer, sf)) : fs::path(opt.out);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_kernel_dump(stem, cached->kernels);
  fmt::print("{} kernels x {} taps at {} Hz (stride {}) -> {}.csv\n", cached->kernels.kernels.size(),
             cached->geometry.kernel_size, sf, cached->geometry.stride, stem.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-frequency-independent universal sound separation"};
  app.require_subcommand(1);
  Options opt;

  auto shared = [&opt](CLI::App* sub, bool out_required) {
    sub->add_option("--seed", opt.seed, "Random seed (overrides the config)");
    sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
    auto* o = sub->add_option("--out", opt.out, "Output path");
    if (out_required) o->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic scene dataset");
  shared(synth, true);
  std::vector<std::size_t> counts;
  std::string split = "train";
  std::vector<int> test_sf;
  synth->add_option("--counts", counts, "Scenes per N=1..4 for a single split")->delimiter(',')->expected(4);
  synth->add_option("--split", split, "Split written when --counts is given");
  synth->add_option("--test-sf", test_sf, "Extra resampled test variants (Hz)")->delimiter(',');

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  shared(train, true);
  std::string data;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> epochs;
  train->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  train->add_option("--seeds", seeds, "Train one model per seed into <out>/seed_<s>")->delimiter(',');
  train->add_option("--epochs", epochs, "Number of epochs (overrides the config)");

  auto* separate = app.add_subcommand("separate", "Separate a mono WAV file at its own sampling frequency");
  shared(separate, true);
  std::string checkpoint;
  std::string input;
  separate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  separate->add_option("--input", input)->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate methods at several sampling frequencies");
  shared(eval, false);
  std::vector<std::string> eval_ckpts;
  std::vector<int> sfs{8000};
  std::vector<std::string> methods{"sfi", "resample-best", "resample-fast"};
  std::string report;
  std::string eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpts, "Checkpoint(s); several are averaged per scene")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--sf", sfs, "Sampling frequencies (Hz)")->delimiter(',');
  eval->add_option("--methods", methods, "sfi,resample-best,resample-fast")->delimiter(',');
  eval->add_option("--report", report, "Per-scene CSV report");
  eval->add_option("--split", eval_split, "Split to evaluate");

  auto* dump = app.add_subcommand("dump-kernels", "Write generated kernels at one sampling frequency");
  shared(dump, false);
  int dump_sf = 0;
  std::string layer = "encoder";
  dump->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  dump->add_option("--sf", dump_sf, "Sampling frequency (Hz)")->required();
  dump->add_option("--layer", layer, "encoder or decoder");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(opt, counts, split, test_sf);
    if (*train) return cmd_train(opt, data, seeds, epochs);
    if (*separate) return cmd_separate(opt, checkpoint, input);
    if (*eval) return cmd_eval(opt, eval_ckpts, data, sfs, methods, report, eval_split);
    if (*dump) return cmd_dump_kernels(opt, checkpoint, dump_sf, layer);
  } catch (const UnsupportedSamplingFrequency& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUnsupportedSf;
  } catch (const NumericError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIo;
  }
  return 0;
}
