#pragma once

// Minibatch training with PIT loss, augmentation, gradient clipping and Adam.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sfi/network.hpp"
#include "sfi/optim.hpp"
#include "sfi/scene.hpp"

namespace sfi {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  bool augment = true;
  double max_gain_db = 5.0;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
};

// Mean PIT loss over batch items. outputs: B x M x L; scenes[b] supplies the
// references and mixture of item b.
ad::Tensor batch_pit_loss(const ad::Tensor& outputs, std::span<const Scene> scenes);

// Mean PIT loss over scenes at the training rate, no gradient.
double evaluate_loss(const SeparationModel& model, std::span<const Scene> scenes, std::size_t batch_size);

class Trainer {
 public:
  Trainer(SeparationModel& model, TrainConfig config);

  // One epoch over `train` followed by validation. Throws NumericError on a
  // non-finite loss before any parameter is updated with it.
  EpochLog run_epoch(std::size_t epoch, std::span<const Scene> train, std::span<const Scene> validation);

  // run_epoch for epochs 0..config.epochs-1; `on_epoch` sees every log row.
  std::vector<EpochLog> fit(std::span<const Scene> train, std::span<const Scene> validation,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

  const Adam& optimizer() const { return adam_; }

 private:
  SeparationModel& model_;
  TrainConfig config_;
  std::vector<ad::Tensor> params_;
  Adam adam_;
};

}  // namespace sfi
