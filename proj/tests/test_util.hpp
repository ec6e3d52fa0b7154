#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sfi/random.hpp"
#include "sfi/tensor.hpp"

namespace sfi::test {

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline ad::Tensor random_tensor(Rng& rng, ad::Shape shape, bool requires_grad = true) {
  const auto n = ad::element_count(shape);
  return ad::Tensor::from(std::move(shape), random_vector(rng, n), requires_grad);
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double relative_error(const std::vector<double>& got, const std::vector<double>& want) {
  std::vector<double> d(got.size());
  for (std::size_t i = 0; i < got.size(); ++i) d[i] = got[i] - want[i];
  const double scale = norm(want);
  return scale > 0.0 ? norm(d) / scale : norm(d);
}

// Fourth-order central difference of a scalar function of one tensor entry.
inline double numeric_derivative(const std::function<double()>& f, double& slot, double h) {
  const double x = slot;
  slot = x + 2 * h;
  const double f2 = f();
  slot = x + h;
  const double f1 = f();
  slot = x - h;
  const double m1 = f();
  slot = x - 2 * h;
  const double m2 = f();
  slot = x;
  return (-f2 + 8 * f1 - 8 * m1 + m2) / (12 * h);
}

// Normwise relative error between backward() gradients of `loss` and finite
// differences, per input tensor. `loss` must rebuild the graph on each call.
inline std::vector<double> gradient_errors(const std::function<ad::Tensor()>& loss, std::vector<ad::Tensor> inputs,
                                           double h = 1e-4) {
  for (auto& t : inputs) t.zero_grad();
  ad::backward(loss());
  std::vector<double> errors;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.size());
    auto values = t.mutable_data();
    const auto eval = [&] {
      ad::NoGradGuard guard;
      return loss().item();
    };
    for (std::size_t i = 0; i < t.size(); ++i) numeric[i] = numeric_derivative(eval, values[i], h);
    errors.push_back(relative_error(analytic, numeric));
  }
  return errors;
}

inline double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

// Solves A x = b for a small dense n x n system by Gaussian elimination with
// partial pivoting.
inline std::vector<double> gauss_solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return x;
}

}  // namespace sfi::test
