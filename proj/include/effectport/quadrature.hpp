#pragma once

#include <vector>

namespace effectport {

/// Gauss-Hermite rule for the weight exp(-x^2): nodes ascending.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  /// log(weight) + node^2, the factor used by adaptive (recentred) rules.
  std::vector<double> log_adaptive_weights;
};

/// Cached per order; safe to call from several threads.
const GaussHermiteRule& gauss_hermite(int order);

/// E[f(mean + sd * Z)] for Z ~ N(0,1).
template <class F>
double normal_expectation(F&& f, double mean, double sd, int order) {
  const auto& rule = gauss_hermite(order);
  constexpr double kSqrt2 = 1.4142135623730951;
  constexpr double kInvSqrtPi = 0.5641895835477563;
  double s = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    s += rule.weights[i] * f(mean + kSqrt2 * sd * rule.nodes[i]);
  }
  return s * kInvSqrtPi;
}

}  // namespace effectport
