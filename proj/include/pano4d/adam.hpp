#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace pano4d {

/// Adam over a flat parameter vector. Plain value type so callers can
/// snapshot and restore it.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  std::vector<double> m, v;
  long step_count = 0;

  explicit Adam(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

  /// x -= lr * mhat / (sqrt(vhat) + eps), element-wise `lr` when `per_element`
  /// is non-empty (then `lr` multiplies it).
  void step(std::span<double> x, std::span<const double> grad, double lr,
            std::span<const double> per_element = {}) {
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double rate = per_element.empty() ? lr : lr * per_element[i];
      x[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
    }
  }
};

}  // namespace pano4d
