#pragma once

#include <span>
#include <utility>
#include <vector>

#include "effectport/meta.hpp"
#include "effectport/tabular.hpp"

namespace effectport {

struct SpearmanResult {
  EffectKind kind = EffectKind::OR;
  double rho = 0;
  int n = 0;
  double ci_low = 0;
  double ci_high = 0;
  double level = 0.95;
};

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

/// Pearson correlation in index order (two-pass).
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of midranks. Throws LengthMismatchError, DomainError
/// for n < 2 or non-finite input, DegenerateError if either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Fisher-z interval with the (1 + rho^2 / 2) variance inflation.
std::pair<double, double> spearman_interval(double rho, int n, double level);

/// Spearman correlation between per-study effect points and control-arm
/// baseline risks. Needs k >= 4.
SpearmanResult correlate_meta(const std::vector<StudyRow>& studies, EffectKind kind,
                              double correction = 0.5, double level = 0.95);

}  // namespace effectport
