#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace effectport {

double logistic(double x);
double logit(double p);

/// Two-sided standard normal critical value for a confidence level,
/// e.g. 1.959964 for 0.95. Throws DomainError outside (0,1).
double normal_critical(double level);

/// Upper tail P(X > x) of a chi-square with `df` degrees of freedom.
double chi_square_upper(double x, int df);

/// Sample quantile with linear interpolation between order statistics
/// (R type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);

double median(std::vector<double> values);

/// log(sum(exp(v))) without overflow; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

}  // namespace effectport
