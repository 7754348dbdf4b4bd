#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "effectport/meta.hpp"
#include "effectport/tabular.hpp"

namespace effectport::bglmm {

using Vector5 = Eigen::Matrix<double, 5, 1>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kRhoBound = 1 - 1e-12;

/// Bivariate logit-normal random effects for the control (0) and
/// treatment (1) arms.
struct Params {
  double mu0 = 0;
  double mu1 = 0;
  double sigma0 = 1;
  double sigma1 = 1;
  double rho = 0;

  /// (mu0, mu1, log sigma0, log sigma1, atanh rho)
  Vector5 to_unconstrained() const;
  /// Inverse map; log sigma is floored at log(kSigmaFloor) and |rho| is
  /// capped at kRhoBound.
  static Params from_unconstrained(const Vector5& theta);
};

/// log of the study's marginal likelihood, by adaptive Gauss-Hermite
/// quadrature recentred at the integrand mode.
double study_loglik(const Params& params, const StudyRow& study, int order = 20);

double loglik(const Params& params, const std::vector<StudyRow>& studies, int order = 20);

struct FitOptions {
  int order = 20;
  int max_iterations = 500;
  double gradient_tolerance = 1e-5;
  double gradient_step = 1e-5;
  double hessian_step = 1e-4;
};

struct Fit {
  Params params;
  std::optional<Matrix5> covariance;  // of the unconstrained parameters
  std::string covariance_note;        // why covariance is missing, if it is
  double loglik = 0;
  bool converged = false;
  bool boundary = false;  // a random-effect SD sits at the floor
  int order = 20;
  int k = 0;
  int iterations = 0;
  double gradient_max_norm = 0;
  std::vector<std::string> warnings;
};

/// Maximum likelihood by BFGS with central-difference gradients from three
/// deterministic starts. Needs k >= 5.
Fit fit(const std::vector<StudyRow>& studies, const FitOptions& options = {});

/// Central-difference gradient of the log-likelihood in unconstrained
/// coordinates.
Vector5 loglik_gradient(const Vector5& theta, const std::vector<StudyRow>& studies, int order,
                        double step = 1e-5);

inline constexpr int kMarginalOrder = 60;

/// E[expit(mu + sigma Z)], Z standard normal.
double marginal_risk(double mu, double sigma, int order = kMarginalOrder);

/// Marginal measure on the transformed scale (log for OR/RR).
double marginal_transformed(const Params& params, EffectKind kind, int order = kMarginalOrder);

/// d marginal_transformed / d theta by central differences.
Vector5 marginal_gradient(const Params& params, EffectKind kind, double step = 1e-5,
                          int order = kMarginalOrder);

/// Marginal OR/RR/RD with a delta-method interval. Without a covariance the
/// estimate carries the point only (IntervalMethod::none).
EffectEstimate marginal(const Fit& fit, EffectKind kind, double level = 0.95);

/// Expected treatment-arm risk for a study whose control risk is p0.
double conditional_treatment_risk(const Params& params, double p0, bool plug_in = false,
                                  int order = 40);

struct CurvePoint {
  double p0 = 0;
  double value = 0;
  double compat_low = 0;
  double compat_high = 0;
  double pred_low = 0;
  double pred_high = 0;
};

struct ConditionalCurve {
  EffectKind kind = EffectKind::OR;
  double level = 0.95;
  bool has_bands = false;
  std::vector<CurvePoint> points;
};

struct CurveOptions {
  double level = 0.95;
  int draws = 4000;
  std::uint64_t seed = 20210601;
  bool plug_in = false;
  int order = 40;
};

ConditionalCurve conditional_curve(const Fit& fit, EffectKind kind,
                                   const std::vector<double>& grid,
                                   const CurveOptions& options = {});

/// Evenly spaced grid of `n` points on [lo, hi].
std::vector<double> linear_grid(double lo, double hi, int n);

/// Studies drawn from the model itself: per study (nu0, nu1) from the
/// bivariate normal, then binomial arms of size `arm_size`.
std::vector<StudyRow> simulate_studies(const Params& params, int k, int arm_size,
                                       std::uint64_t seed, const std::string& meta_id = "sim");

}  // namespace effectport::bglmm
