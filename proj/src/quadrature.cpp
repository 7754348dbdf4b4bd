#include "effectport/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "effectport/error.hpp"

namespace effectport {

namespace {

// Newton iteration on orthonormal Hermite polynomials with the usual
// asymptotic starting guesses for successive roots.
GaussHermiteRule compute_rule(int n) {
  constexpr double kPiM4 = 0.7511255444649425;  // pi^(-1/4)
  std::vector<double> x(n), w(n);
  const int m = (n + 1) / 2;
  double z = 0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0;
    for (int its = 0; its < 100; ++its) {
      double p1 = kPiM4, p2 = 0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  GaussHermiteRule rule;
  // ascending
  for (int i = n - 1; i >= 0; --i) {
    rule.nodes.push_back(x[i]);
    rule.weights.push_back(w[i]);
    rule.log_adaptive_weights.push_back(std::log(w[i]) + x[i] * x[i]);
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int order) {
  if (order < 1 || order > 400) throw DomainError("quadrature order must lie in [1, 400]");
  static std::mutex mutex;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, compute_rule(order)).first;
  return it->second;
}

}  // namespace effectport
