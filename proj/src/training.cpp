#include "sfi/training.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "sfi/errors.hpp"
#include "sfi/loss_metrics.hpp"
#include "sfi/random.hpp"

namespace sfi {

namespace {

// B x 1 x L tensor of mixtures.
ad::Tensor stack_mixtures(std::span<const Scene> scenes) {
  const std::size_t length = scenes.front().length();
  std::vector<double> data;
  data.reserve(scenes.size() * length);
  for (const auto& s : scenes) {
    if (s.length() != length) throw std::invalid_argument("stack_mixtures: scenes differ in length");
    data.insert(data.end(), s.mixture.begin(), s.mixture.end());
  }
  return ad::Tensor::from({scenes.size(), 1, length}, std::move(data));
}

std::vector<Signal> item_outputs(std::span<const double> y, std::size_t item, std::size_t m, std::size_t length) {
  std::vector<Signal> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto* p = y.data() + (item * m + k) * length;
    out[k].assign(p, p + length);
  }
  return out;
}

}  // namespace

ad::Tensor batch_pit_loss(const ad::Tensor& outputs, std::span<const Scene> scenes) {
  if (outputs.rank() != 3 || outputs.dim(0) != scenes.size())
    throw std::invalid_argument("batch_pit_loss: outputs must be B x M x L with one scene per item");
  const std::size_t batch = outputs.dim(0);
  const std::size_t m = outputs.dim(1);
  const std::size_t length = outputs.dim(2);

  std::vector<Assignment> assignments(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto out = item_outputs(outputs.data(), b, m, length);
    const LossBreakdown loss = pit_loss(out, scenes[b].sources, scenes[b].mixture);
    assignments[b] = loss.assignment;
    total += loss.total;
  }
  const double inv = 1.0 / static_cast<double>(batch);

  auto node = std::make_shared<ad::Node>();
  node->shape = {};
  node->value = {total * inv};
  if (ad::grad_enabled() && outputs.requires_grad()) {
    node->requires_grad = true;
    node->parents.push_back(outputs.shared());
    // Scenes are copied so the closure stays valid after the caller's batch is gone.
    std::vector<Scene> held(scenes.begin(), scenes.end());
    node->backward_fn = [held = std::move(held), assignments = std::move(assignments), batch, m, length,
                         inv](ad::Node& self) {
      ad::Node& parent = *self.parents[0];
      auto g = parent.ensure_grad();
      const double upstream = self.grad[0] * inv;
      for (std::size_t b = 0; b < batch; ++b) {
        const auto out = item_outputs(parent.value, b, m, length);
        const auto grads = pit_loss_gradient(out, held[b].sources, held[b].mixture, assignments[b]);
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t t = 0; t < length; ++t) g[(b * m + k) * length + t] += upstream * grads[k][t];
      }
    };
  }
  return ad::Tensor(std::move(node));
}

double evaluate_loss(const SeparationModel& model, std::span<const Scene> scenes, std::size_t batch_size) {
  if (scenes.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t begin = 0; begin < scenes.size(); begin += batch_size) {
    const auto chunk = scenes.subspan(begin, std::min(batch_size, scenes.size() - begin));
    const ad::Tensor y = model.forward_trainable(stack_mixtures(chunk));
    total += batch_pit_loss(y, chunk).item() * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(scenes.size());
}

Trainer::Trainer(SeparationModel& model, TrainConfig config)
    : model_(model),
      config_(config),
      params_(model.parameters()),
      adam_(params_, AdamOptions{.learning_rate = config.learning_rate}) {
  if (config_.batch_size == 0) throw std::invalid_argument("Trainer: batch_size must be positive");
}

EpochLog Trainer::run_epoch(std::size_t epoch, std::span<const Scene> train, std::span<const Scene> validation) {
  if (train.empty()) throw std::invalid_argument("Trainer: empty training set");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config_.seed, 0x7000 + epoch);
  rng.shuffle(order.begin(), order.end());

  double total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size, ++batch_index) {
    std::vector<Scene> batch;
    for (std::size_t i = begin; i < std::min(order.size(), begin + config_.batch_size); ++i)
      batch.push_back(train[order[i]]);
    if (config_.augment) {
      const std::uint64_t aug_seed = Rng::mix(Rng::mix(config_.seed, 0xa000 + epoch), batch_index);
      batch = augment_batch(batch, aug_seed, AugmentOptions{.max_gain_db = config_.max_gain_db});
    }

    adam_.zero_grad();
    const ad::Tensor y = model_.forward_trainable(stack_mixtures(batch));
    const ad::Tensor loss = batch_pit_loss(y, batch);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw NumericError(fmt::format("non-finite training loss at epoch {} batch {}", epoch, batch_index));
    ad::backward(loss);
    clip_gradients(params_, config_.clip_norm);
    adam_.step(epoch);
    model_.parameters_changed();
    total += value * static_cast<double>(batch.size());
  }

  EpochLog log;
  log.epoch = epoch;
  log.learning_rate = adam_.learning_rate(epoch);
  log.train_loss = total / static_cast<double>(train.size());
  if (validation.empty()) {
    log.val_loss = std::numeric_limits<double>::quiet_NaN();
    return log;
  }
  log.val_loss = evaluate_loss(model_, validation, config_.batch_size);
  if (!std::isfinite(log.val_loss)) throw NumericError(fmt::format("non-finite validation loss at epoch {}", epoch));
  return log;
}

std::vector<EpochLog> Trainer::fit(std::span<const Scene> train, std::span<const Scene> validation,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    logs.push_back(run_epoch(epoch, train, validation));
    if (on_epoch) on_epoch(logs.back());
  }
  return logs;
}

}  // namespace sfi
