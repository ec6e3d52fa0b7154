#include "sfi/loss_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sfi {

namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994046;  // 10 / ln(10)

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

void check_inputs(std::span<const Signal> outputs, std::span<const Signal> sources, std::span<const double> mixture) {
  if (outputs.empty() || sources.empty()) throw std::invalid_argument("pit_loss: need at least one output and source");
  if (sources.size() > outputs.size()) throw std::invalid_argument("pit_loss: more sources than outputs");
  const std::size_t len = mixture.size();
  for (const auto& s : outputs)
    if (s.size() != len) throw std::invalid_argument("pit_loss: output length differs from mixture");
  for (const auto& s : sources)
    if (s.size() != len) throw std::invalid_argument("pit_loss: source length differs from mixture");
}

// Pairwise distances d[n][m] = ||s_n - y_m||^2 with s_n = 0 for dummy slots n >= N.
std::vector<std::vector<double>> distance_table(std::span<const Signal> outputs, std::span<const Signal> sources) {
  const std::size_t m_out = outputs.size();
  std::vector<std::vector<double>> d(m_out, std::vector<double>(m_out));
  for (std::size_t n = 0; n < m_out; ++n)
    for (std::size_t m = 0; m < m_out; ++m)
      d[n][m] = n < sources.size() ? distance(sources[n], outputs[m]) : energy(outputs[m]);
  return d;
}

struct Terms {
  double l1;
  std::optional<double> l2;
};

Terms terms_for(const std::vector<std::vector<double>>& d, const std::vector<double>& source_energy, double floor2,
                const Assignment& p, double eps) {
  const std::size_t n_src = source_energy.size();
  const std::size_t m_out = d.size();
  Terms t{0.0, std::nullopt};
  for (std::size_t n = 0; n < n_src; ++n) t.l1 += 10.0 * std::log10((d[n][p[n]] + eps) / (source_energy[n] + eps));
  t.l1 /= static_cast<double>(n_src);
  if (m_out > n_src) {
    double l2 = 0.0;
    for (std::size_t n = n_src; n < m_out; ++n) l2 += 10.0 * std::log10(d[n][p[n]] + floor2);
    t.l2 = l2 / static_cast<double>(m_out - n_src);
  }
  return t;
}

LossBreakdown make_breakdown(const Terms& t, Assignment p, std::size_t n_src, std::size_t m_out) {
  LossBreakdown b;
  b.l1 = t.l1;
  b.l2 = t.l2;
  b.total = t.l1 + t.l2.value_or(0.0);
  b.assignment = std::move(p);
  b.n_sources = n_src;
  b.n_outputs = m_out;
  return b;
}

}  // namespace

LossBreakdown pit_loss(std::span<const Signal> outputs, std::span<const Signal> sources, std::span<const double> mixture,
                       double eps, double tau) {
  check_inputs(outputs, sources, mixture);
  const auto d = distance_table(outputs, sources);
  std::vector<double> source_energy;
  for (const auto& s : sources) source_energy.push_back(energy(s));
  const double floor2 = tau * energy(mixture) + eps;

  Assignment p(outputs.size());
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::optional<LossBreakdown> best;
  do {
    const Terms t = terms_for(d, source_energy, floor2, p, eps);
    const double total = t.l1 + t.l2.value_or(0.0);
    if (!best || total < best->total) best = make_breakdown(t, p, sources.size(), outputs.size());
  } while (std::next_permutation(p.begin(), p.end()));
  return *best;
}

LossBreakdown assignment_loss(std::span<const Signal> outputs, std::span<const Signal> sources,
                              std::span<const double> mixture, const Assignment& assignment, double eps, double tau) {
  check_inputs(outputs, sources, mixture);
  if (assignment.size() != outputs.size()) throw std::invalid_argument("assignment_loss: assignment size != M");
  const auto d = distance_table(outputs, sources);
  std::vector<double> source_energy;
  for (const auto& s : sources) source_energy.push_back(energy(s));
  const Terms t = terms_for(d, source_energy, tau * energy(mixture) + eps, assignment, eps);
  return make_breakdown(t, assignment, sources.size(), outputs.size());
}

std::vector<Signal> pit_loss_gradient(std::span<const Signal> outputs, std::span<const Signal> sources,
                                      std::span<const double> mixture, const Assignment& assignment, double eps,
                                      double tau) {
  check_inputs(outputs, sources, mixture);
  const std::size_t n_src = sources.size();
  const std::size_t m_out = outputs.size();
  const double floor2 = tau * energy(mixture) + eps;
  std::vector<Signal> grad(m_out, Signal(mixture.size(), 0.0));
  for (std::size_t n = 0; n < m_out; ++n) {
    const std::size_t m = assignment.at(n);
    const Signal& y = outputs[m];
    Signal& g = grad[m];
    if (n < n_src) {
      const Signal& s = sources[n];
      const double c = kDbPerNeper * 2.0 / ((distance(s, y) + eps) * static_cast<double>(n_src));
      for (std::size_t i = 0; i < y.size(); ++i) g[i] += c * (y[i] - s[i]);
    } else {
      const double c = kDbPerNeper * 2.0 / ((energy(y) + floor2) * static_cast<double>(m_out - n_src));
      for (std::size_t i = 0; i < y.size(); ++i) g[i] += c * y[i];
    }
  }
  return grad;
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference, double eps) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("si_sdr: length mismatch");
  const double ref_energy = energy(reference);
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: reference has zero energy");
  double dot = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) dot += estimate[i] * reference[i];
  const double alpha = dot / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double t = alpha * reference[i];
    target += t * t;
    residual += (estimate[i] - t) * (estimate[i] - t);
  }
  // The floor scales with the estimate so that the ratio is exactly scale invariant.
  const double est_energy = energy(estimate);
  const double floor = est_energy > 0.0 ? eps * est_energy : eps;
  return 10.0 * std::log10((target + floor) / (residual + floor));
}

double SceneScore::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

SceneScore eval_scene(std::span<const Signal> outputs, std::span<const Signal> sources, std::span<const double> mixture,
                      double eps) {
  check_inputs(outputs, sources, mixture);
  const std::size_t n_src = sources.size();
  const std::size_t m_out = outputs.size();

  std::vector<std::vector<double>> table(n_src, std::vector<double>(m_out));
  for (std::size_t n = 0; n < n_src; ++n)
    for (std::size_t m = 0; m < m_out; ++m) table[n][m] = si_sdr(outputs[m], sources[n], eps);

  Assignment p(m_out);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Assignment best;
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    double score = 0.0;
    for (std::size_t n = 0; n < n_src; ++n) score += table[n][p[n]];
    if (best.empty() || score > best_score) {
      best_score = score;
      best.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n_src));
    }
  } while (std::next_permutation(p.begin(), p.end()));

  SceneScore result;
  result.improvement = n_src >= 2;
  result.assignment = best;
  for (std::size_t n = 0; n < n_src; ++n) {
    const double est = table[n][best[n]];
    result.estimate_si_sdr.push_back(est);
    result.values.push_back(result.improvement ? est - si_sdr(mixture, sources[n], eps) : est);
  }
  return result;
}

}  // namespace sfi
