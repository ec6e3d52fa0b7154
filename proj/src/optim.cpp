#include "sfi/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sfi {

double global_grad_norm(const std::vector<ad::Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(std::vector<ad::Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= factor;
  }
  return factor;
}

Adam::Adam(std::vector<ad::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  first_.reserve(params_.size());
  second_.reserve(params_.size());
  for (const auto& p : params_) {
    first_.emplace_back(p.size(), 0.0);
    second_.emplace_back(p.size(), 0.0);
  }
}

double Adam::learning_rate(std::size_t epoch) const {
  const auto decays = options_.decay_interval == 0 ? 0 : epoch / options_.decay_interval;
  return options_.learning_rate * std::pow(options_.decay_factor, static_cast<double>(decays));
}

void Adam::step(std::size_t epoch) {
  ++steps_;
  const double lr = learning_rate(epoch);
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (first_[i].size() != p.size()) throw std::invalid_argument("Adam::step: parameter shape changed");
    if (!p.has_grad()) continue;
    auto values = p.mutable_data();
    const auto grads = p.grad();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * grads[j];
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * grads[j] * grads[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace sfi
