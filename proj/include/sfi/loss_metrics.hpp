#pragma once

// Permutation-invariant variable-source loss and SI-SDR based evaluation.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace sfi {

using Signal = std::vector<double>;

inline constexpr double kLossEps = 1e-8;
inline constexpr double kLossTau = 1e-3;

// assignment[n] = output index assigned to source slot n (n < M; slots >= N are dummy sources).
using Assignment = std::vector<std::size_t>;

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;                // matched-source term
  std::optional<double> l2;       // unassigned-output term, present only when M > N
  Assignment assignment;
  std::size_t n_sources = 0;      // N
  std::size_t n_outputs = 0;      // M
};

// Minimum over all M! assignments of the negative-SNR loss with dummy sources.
LossBreakdown pit_loss(std::span<const Signal> outputs, std::span<const Signal> sources, std::span<const double> mixture,
                       double eps = kLossEps, double tau = kLossTau);

// Loss value of one fixed assignment (same definition as pit_loss).
LossBreakdown assignment_loss(std::span<const Signal> outputs, std::span<const Signal> sources,
                              std::span<const double> mixture, const Assignment& assignment, double eps = kLossEps,
                              double tau = kLossTau);

// d(total)/d(outputs) under a fixed assignment.
std::vector<Signal> pit_loss_gradient(std::span<const Signal> outputs, std::span<const Signal> sources,
                                      std::span<const double> mixture, const Assignment& assignment,
                                      double eps = kLossEps, double tau = kLossTau);

// 10 log10((||a s||^2 + e) / (||est - a s||^2 + e)), a = <est, s> / ||s||^2,
// e = eps ||est||^2 (eps itself for a silent estimate).
double si_sdr(std::span<const double> estimate, std::span<const double> reference, double eps = kLossEps);

struct SceneScore {
  bool improvement = false;               // true: values are SI-SDR improvements (N >= 2)
  std::vector<double> values;             // one per true source, dB
  std::vector<double> estimate_si_sdr;    // SI-SDR of the matched estimate
  Assignment assignment;                  // source n -> output index

  double mean() const;
};

// Best-permutation matching by mean SI-SDR over the N true sources. Reports
// SI-SDR for N = 1 and SI-SDR improvement over the mixture for N >= 2.
SceneScore eval_scene(std::span<const Signal> outputs, std::span<const Signal> sources,
                      std::span<const double> mixture, double eps = kLossEps);

}  // namespace sfi
