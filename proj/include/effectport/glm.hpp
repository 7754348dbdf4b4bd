#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "effectport/error.hpp"
#include "effectport/tabular.hpp"

namespace effectport::glm {

enum class Link { logit, log };

std::string_view to_string(Link link);
Link parse_link(std::string_view text);

struct Pattern {
  std::vector<double> x;  // covariate values, aligned with Dataset::names()
  double events = 0;
  double trials = 0;
};

/// Binomial data keyed by covariate pattern. Row-expanded observations and
/// pre-aggregated events/trials land in the same representation, so both
/// forms produce the same fit.
class Dataset {
 public:
  explicit Dataset(std::vector<std::string> covariate_names);

  /// One row with binary outcome `y` and a positive frequency weight.
  void add_observation(std::span<const double> values, int y, double weight = 1);
  void add_group(std::span<const double> values, double events, double trials);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t index_of(std::string_view name) const;
  /// Patterns in ascending covariate order.
  std::vector<Pattern> patterns() const;

  /// Rows whose covariate `name` equals `value`.
  Dataset subset(std::string_view name, double value) const;

  double total_events() const;
  double total_trials() const;
  bool empty() const { return groups_.empty(); }

 private:
  std::vector<std::string> names_;
  std::map<std::vector<double>, std::pair<double, double>> groups_;
};

/// A main effect ("X") or a pairwise product ("X:Z").
struct Term {
  std::vector<std::string> factors;

  std::string name() const;
  bool operator==(const Term& o) const;
};

struct ModelSpec {
  Link link = Link::logit;
  std::vector<Term> terms;  // intercept is implicit

  /// Parses "X,Z,X:Z". Product factors must appear as main effects.
  static ModelSpec parse(Link link, std::string_view terms);
  void validate() const;
  bool contains(const Term& t) const;
};

struct CoefficientSummary {
  std::string name;
  double estimate = 0;
  double se = 0;
  double exp_estimate = 0;
  double exp_low = 0;
  double exp_high = 0;
};

struct DataSignature {
  std::size_t patterns = 0;
  double events = 0;
  double trials = 0;
  bool operator==(const DataSignature&) const = default;
};

struct GlmFit {
  ModelSpec spec;
  std::vector<std::string> covariate_names;
  std::vector<std::string> coefficient_names;  // "(Intercept)" first
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;
  double deviance = 0;
  double loglik = 0;  // binomial kernel, without combinatorial constants
  int iterations = 0;
  bool converged = false;
  double gradient_max_norm = 0;
  std::vector<double> deviance_trace;  // deviance after each accepted step
  DataSignature data;

  std::size_t coefficient_index(std::string_view name) const;
  double coefficient(std::string_view name) const;
  std::vector<CoefficientSummary> summary(double level = 0.95) const;
};

/// Thrown when the log-link MLE sits on the p = 1 boundary. The
/// boundary-constrained fit is attached with converged == false.
class BoundaryError : public Error {
 public:
  BoundaryError(const std::string& what, GlmFit fit)
      : Error("BoundaryError", ErrorClass::numerical, what), fit_(std::move(fit)) {}
  const GlmFit& fit() const noexcept { return fit_; }

 private:
  GlmFit fit_;
};

struct FitOptions {
  int max_iterations = 100;
  double deviance_tolerance = 1e-10;
  double gradient_tolerance = 1e-8;
  double separation_bound = 30;
  double log_link_ceiling = 1 - 1e-10;
};

/// Maximum likelihood by IRLS with step halving.
GlmFit fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options = {});

/// Design row (intercept first) for one covariate pattern.
Eigen::VectorXd design_row(const ModelSpec& spec, const std::vector<std::string>& names,
                           std::span<const double> x);

/// Fitted event probability for a covariate pattern.
double predict(const GlmFit& fit, std::span<const double> x);

/// Binomial log-likelihood kernel and its gradient at an arbitrary beta.
double log_likelihood(const Dataset& data, const ModelSpec& spec, const Eigen::VectorXd& beta);
Eigen::VectorXd score(const Dataset& data, const ModelSpec& spec, const Eigen::VectorXd& beta);

/// exp(beta_term + modifier_level * beta_{term:modifier}).
double stratum_effect(const GlmFit& fit, std::string_view term, std::string_view modifier,
                      double modifier_level);

struct LrtResult {
  double statistic = 0;
  int df = 0;
  double p_value = 1;
  std::string note;
};

inline constexpr std::string_view kTermSelectionNote =
    "Dropping a term because its p-value is large biases marginal and subgroup "
    "estimates; report the fuller model alongside this test.";

LrtResult lrt(const GlmFit& full, const GlmFit& reduced);

struct StandardizeOptions {
  int resamples = 2000;
  std::uint64_t seed = 20210601;
  double level = 0.95;
};

struct StandardizedEffects {
  double risk_exposed = 0;    // r1*
  double risk_unexposed = 0;  // r0*
  EffectEstimate odds_ratio;
  EffectEstimate risk_ratio;
  EffectEstimate risk_difference;
  int failed_resamples = 0;
};

/// Standardized risks with `exposure` forced to 1 and to 0, averaged over
/// the data's covariate distribution. Percentile bootstrap intervals.
StandardizedEffects standardize(const GlmFit& fit, const Dataset& data,
                                std::string_view exposure,
                                const StandardizeOptions& options = {});

/// Point estimates only (no resampling).
std::pair<double, double> standardized_risks(const GlmFit& fit, const Dataset& data,
                                             std::string_view exposure);

}  // namespace effectport::glm
