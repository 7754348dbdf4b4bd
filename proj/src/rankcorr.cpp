#include "effectport/rankcorr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "effectport/error.hpp"
#include "effectport/stats.hpp"

namespace effectport {

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double r = (static_cast<double>(i + j) + 2) / 2;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatchError("spearman inputs differ in length");
  if (x.size() < 2) throw DomainError("spearman needs at least two pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DomainError("spearman inputs must be finite");
    }
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
  };
  if (constant(x) || constant(y)) {
    throw DegenerateError("spearman correlation undefined for a constant vector");
  }
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return std::clamp(pearson(rx, ry), -1.0, 1.0);
}

std::pair<double, double> spearman_interval(double rho, int n, double level) {
  if (n < 4) throw DomainError("spearman interval needs n >= 4");
  const double z = std::atanh(rho);
  const double se = std::sqrt((1 + rho * rho / 2) / (n - 3));
  const double crit = normal_critical(level);
  return {std::tanh(z - crit * se), std::tanh(z + crit * se)};
}

SpearmanResult correlate_meta(const std::vector<StudyRow>& studies, EffectKind kind,
                              double correction, double level) {
  if (studies.size() < 4) throw InsufficientStudiesError("rank correlation needs at least 4 studies");
  std::vector<double> baseline, points;
  for (const auto& s : studies) {
    s.validate();
    auto table = s.table();
    if (correction > 0) table = correct_zero_cells(table, correction);
    baseline.push_back(table.baseline_risk());
    points.push_back(effect(table, kind, level).point);
  }
  SpearmanResult r;
  r.kind = kind;
  r.level = level;
  r.n = static_cast<int>(studies.size());
  r.rho = spearman(baseline, points);
  std::tie(r.ci_low, r.ci_high) = spearman_interval(r.rho, r.n, level);
  r.ci_low = std::min(r.ci_low, r.rho);
  r.ci_high = std::max(r.ci_high, r.rho);
  return r;
}

}  // namespace effectport
