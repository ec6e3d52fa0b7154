#pragma once

#include <cstddef>
#include <vector>

#include "sfi/tensor.hpp"

namespace sfi {

// Scales all gradients by max_norm / g when their global l2 norm g exceeds
// max_norm. Returns the factor applied (1 when unchanged).
double clip_gradients(std::vector<ad::Tensor>& params, double max_norm = 5.0);
double global_grad_norm(const std::vector<ad::Tensor>& params);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 1.0 / 3.0;  // applied every `decay_interval` epochs
  std::size_t decay_interval = 10;
};

class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamOptions options = {});

  // lr0 * decay_factor ^ floor(epoch / decay_interval); epochs are 0-based.
  double learning_rate(std::size_t epoch) const;
  // One bias-corrected update using the current gradients.
  void step(std::size_t epoch);
  void zero_grad();

  std::size_t step_count() const { return steps_; }
  const std::vector<ad::Tensor>& params() const { return params_; }

 private:
  std::vector<ad::Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

}  // namespace sfi
