#include "effectport/glm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "effectport/rng.hpp"
#include "effectport/stats.hpp"

namespace effectport::glm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Per-pattern working quantities for the current linear predictor.
struct Working {
  Eigen::MatrixXd X;
  Eigen::VectorXd events;
  Eigen::VectorXd trials;
};

Working build_working(const Dataset& data, const ModelSpec& spec) {
  const auto patterns = data.patterns();
  const std::size_t p = spec.terms.size() + 1;
  std::size_t n = 0;
  for (const auto& pat : patterns) n += pat.trials > 0 ? 1 : 0;
  Working w{Eigen::MatrixXd(n, p), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  std::size_t row = 0;
  for (const auto& pat : patterns) {
    if (pat.trials <= 0) continue;
    w.X.row(row) = design_row(spec, data.names(), pat.x).transpose();
    w.events(row) = pat.events;
    w.trials(row) = pat.trials;
    ++row;
  }
  return w;
}

Eigen::VectorXd mean_of(Link link, const Eigen::VectorXd& eta) {
  Eigen::VectorXd prob(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    prob(i) = link == Link::logit ? logistic(eta(i)) : std::exp(eta(i));
  }
  return prob;
}

double xlogy(double x, double y) { return x == 0 ? 0.0 : x * std::log(y); }

double kernel_loglik(const Working& w, const Eigen::VectorXd& prob) {
  double ll = 0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    ll += xlogy(w.events(i), prob(i)) + xlogy(w.trials(i) - w.events(i), 1 - prob(i));
  }
  return ll;
}

double deviance_of(const Working& w, const Eigen::VectorXd& prob) {
  double dev = 0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const double y = w.events(i);
    const double n = w.trials(i);
    const double mu = n * prob(i);
    if (y > 0) dev += y * std::log(y / mu);
    if (n - y > 0) dev += (n - y) * std::log((n - y) / (n - mu));
  }
  return 2 * dev;
}

Eigen::VectorXd score_of(Link link, const Working& w, const Eigen::VectorXd& prob) {
  Eigen::VectorXd r(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const double resid = w.events(i) - w.trials(i) * prob(i);
    r(i) = link == Link::logit ? resid : resid / (1 - prob(i));
  }
  return w.X.transpose() * r;
}

Eigen::MatrixXd information_of(Link link, const Working& w, const Eigen::VectorXd& prob) {
  Eigen::VectorXd weight(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const double p = prob(i);
    weight(i) = link == Link::logit ? w.trials(i) * p * (1 - p) : w.trials(i) * p / (1 - p);
  }
  return w.X.transpose() * weight.asDiagonal() * w.X;
}

bool feasible(Link link, const Eigen::VectorXd& prob, double ceiling) {
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    if (!std::isfinite(prob(i))) return false;
    if (link == Link::log && prob(i) > ceiling) return false;
    if (link == Link::logit && (prob(i) <= 0 || prob(i) >= 1)) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Link link) { return link == Link::logit ? "logit" : "log"; }

Link parse_link(std::string_view text) {
  if (text == "logit") return Link::logit;
  if (text == "log") return Link::log;
  throw DomainError("unknown link '" + std::string(text) + "'");
}

Dataset::Dataset(std::vector<std::string> covariate_names) : names_(std::move(covariate_names)) {
  auto sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DomainError("covariate names must be unique");
  }
}

void Dataset::add_observation(std::span<const double> values, int y, double weight) {
  if (y != 0 && y != 1) throw DomainError("outcome must be 0 or 1");
  add_group(values, y == 1 ? weight : 0.0, weight);
}

void Dataset::add_group(std::span<const double> values, double events, double trials) {
  if (values.size() != names_.size()) {
    throw DomainError("covariate vector length does not match dataset names");
  }
  if (!(trials > 0) || !(events >= 0) || events > trials) {
    throw DomainError("need trials > 0 and 0 <= events <= trials");
  }
  auto& slot = groups_[std::vector<double>(values.begin(), values.end())];
  slot.first += events;
  slot.second += trials;
}

std::size_t Dataset::index_of(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw MissingTermError("no covariate named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<Pattern> Dataset::patterns() const {
  std::vector<Pattern> out;
  out.reserve(groups_.size());
  for (const auto& [x, et] : groups_) out.push_back({x, et.first, et.second});
  return out;
}

Dataset Dataset::subset(std::string_view name, double value) const {
  const auto j = index_of(name);
  Dataset out(names_);
  for (const auto& [x, et] : groups_) {
    if (x[j] == value) out.groups_[x] = et;
  }
  return out;
}

double Dataset::total_events() const {
  double s = 0;
  for (const auto& [x, et] : groups_) s += et.first;
  return s;
}

double Dataset::total_trials() const {
  double s = 0;
  for (const auto& [x, et] : groups_) s += et.second;
  return s;
}

std::string Term::name() const {
  std::string out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) out += ':';
    out += factors[i];
  }
  return out;
}

bool Term::operator==(const Term& o) const {
  auto x = factors, y = o.factors;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return x == y;
}

ModelSpec ModelSpec::parse(Link link, std::string_view terms) {
  ModelSpec spec;
  spec.link = link;
  for (const auto& token : split(terms, ',')) {
    if (token.empty()) continue;
    Term t;
    for (auto& f : split(token, ':')) {
      if (f.empty()) throw DomainError("malformed term '" + token + "'");
      t.factors.push_back(std::move(f));
    }
    spec.terms.push_back(std::move(t));
  }
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& t = terms[i];
    if (t.factors.empty() || t.factors.size() > 2) {
      throw DomainError("terms are main effects or pairwise products");
    }
    if (t.factors.size() == 2) {
      if (t.factors[0] == t.factors[1]) throw DomainError("product of a term with itself");
      for (const auto& f : t.factors) {
        if (!contains(Term{{f}})) {
          throw DomainError("product term '" + t.name() + "' lacks main effect '" + f + "'");
        }
      }
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (terms[j] == t) throw DomainError("duplicate term '" + t.name() + "'");
    }
  }
}

bool ModelSpec::contains(const Term& t) const {
  return std::find(terms.begin(), terms.end(), t) != terms.end();
}

Eigen::VectorXd design_row(const ModelSpec& spec, const std::vector<std::string>& names,
                           std::span<const double> x) {
  Eigen::VectorXd row(spec.terms.size() + 1);
  row(0) = 1;
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    double v = 1;
    for (const auto& f : spec.terms[k].factors) {
      const auto it = std::find(names.begin(), names.end(), f);
      if (it == names.end()) throw MissingTermError("no covariate named '" + f + "'");
      v *= x[static_cast<std::size_t>(it - names.begin())];
    }
    row(static_cast<Eigen::Index>(k) + 1) = v;
  }
  return row;
}

double predict(const GlmFit& fit, std::span<const double> x) {
  const double eta = design_row(fit.spec, fit.covariate_names, x).dot(fit.beta);
  return fit.spec.link == Link::logit ? logistic(eta) : std::exp(eta);
}

double log_likelihood(const Dataset& data, const ModelSpec& spec, const Eigen::VectorXd& beta) {
  const auto w = build_working(data, spec);
  return kernel_loglik(w, mean_of(spec.link, w.X * beta));
}

Eigen::VectorXd score(const Dataset& data, const ModelSpec& spec, const Eigen::VectorXd& beta) {
  const auto w = build_working(data, spec);
  return score_of(spec.link, w, mean_of(spec.link, w.X * beta));
}

std::size_t GlmFit::coefficient_index(std::string_view name) const {
  for (std::size_t i = 0; i < coefficient_names.size(); ++i) {
    if (coefficient_names[i] == name) return i;
  }
  // products are matched regardless of factor order
  const Term wanted{split(name, ':')};
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    if (spec.terms[k] == wanted) return k + 1;
  }
  throw MissingTermError("model has no term '" + std::string(name) + "'");
}

double GlmFit::coefficient(std::string_view name) const {
  return beta(static_cast<Eigen::Index>(coefficient_index(name)));
}

std::vector<CoefficientSummary> GlmFit::summary(double level) const {
  const double z = normal_critical(level);
  std::vector<CoefficientSummary> out;
  for (std::size_t i = 0; i < coefficient_names.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const double b = beta(j);
    const double se = std::sqrt(std::max(0.0, covariance(j, j)));
    out.push_back({coefficient_names[i], b, se, std::exp(b), std::exp(b - z * se),
                   std::exp(b + z * se)});
  }
  return out;
}

namespace {

// One extra full Newton step after deviance convergence, kept only if it
// does not worsen the deviance. Drives the score to rounding level.
void polish(Link link, const Working& w, double ceiling, Eigen::VectorXd& beta,
            Eigen::VectorXd& prob, double& dev, Eigen::VectorXd& grad) {
  const Eigen::VectorXd step = information_of(link, w, prob).ldlt().solve(grad);
  const Eigen::VectorXd b = beta + step;
  const Eigen::VectorXd pr = mean_of(link, w.X * b);
  if (!feasible(link, pr, ceiling)) return;
  const double d = deviance_of(w, pr);
  if (!std::isfinite(d) || d > dev + 1e-12 * (std::abs(dev) + 1)) return;
  const Eigen::VectorXd g = score_of(link, w, pr);
  if (g.cwiseAbs().maxCoeff() >= grad.cwiseAbs().maxCoeff()) return;
  beta = b;
  prob = pr;
  dev = std::min(dev, d);
  grad = g;
}

}  // namespace

GlmFit fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
  spec.validate();
  if (data.empty()) throw DomainError("cannot fit a model to an empty dataset");
  const auto w = build_working(data, spec);
  const auto p = w.X.cols();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(w.X);
  if (qr.rank() < p) throw RankDeficientError("design matrix is rank deficient");

  GlmFit result;
  result.spec = spec;
  result.covariate_names = data.names();
  result.coefficient_names.push_back("(Intercept)");
  for (const auto& t : spec.terms) result.coefficient_names.push_back(t.name());
  result.data = {data.patterns().size(), data.total_events(), data.total_trials()};

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (spec.link == Link::log) {
    const double mean_y = data.total_events() / data.total_trials();
    beta(0) = std::log(mean_y) - 1e-3;
  }
  Eigen::VectorXd prob = mean_of(spec.link, w.X * beta);
  if (!feasible(spec.link, prob, options.log_link_ceiling)) {
    throw DomainError("no feasible starting point for the log link");
  }
  double dev = deviance_of(w, prob);
  Eigen::VectorXd grad = score_of(spec.link, w, prob);

  bool stalled = false;
  int iter = 0;
  while (iter < options.max_iterations) {
    const Eigen::MatrixXd info = information_of(spec.link, w, prob);
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    // Under separation the score vanishes while the Newton step stays O(1).
    if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance &&
        step.cwiseAbs().maxCoeff() < 1e-4) {
      result.converged = true;
      break;
    }
    ++iter;

    double scale = 1;
    Eigen::VectorXd next_beta, next_prob;
    double next_dev = dev;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving, scale /= 2) {
      next_beta = beta + scale * step;
      next_prob = mean_of(spec.link, w.X * next_beta);
      if (!feasible(spec.link, next_prob, options.log_link_ceiling)) continue;
      next_dev = deviance_of(w, next_prob);
      if (std::isfinite(next_dev) && next_dev <= dev + 1e-12 * (std::abs(dev) + 1)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    const double rel_change = std::abs(dev - next_dev) / (std::abs(next_dev) + 0.1);
    const double moved = (next_beta - beta).cwiseAbs().maxCoeff();
    beta = next_beta;
    prob = next_prob;
    dev = std::min(dev, next_dev);
    grad = score_of(spec.link, w, prob);
    result.deviance_trace.push_back(dev);
    if (spec.link == Link::logit && beta.cwiseAbs().maxCoeff() > options.separation_bound) break;
    // A flat deviance with a large step means the estimates are running off
    // to infinity, not converging.
    if (rel_change < options.deviance_tolerance && moved < 1e-4) {
      result.converged = true;
      polish(spec.link, w, options.log_link_ceiling, beta, prob, dev, grad);
      break;
    }
  }

  result.beta = beta;
  result.iterations = iter;
  result.deviance = dev;
  result.loglik = kernel_loglik(w, prob);
  result.gradient_max_norm = grad.cwiseAbs().maxCoeff();
  Eigen::MatrixXd cov = information_of(spec.link, w, prob).inverse();
  result.covariance = (cov + cov.transpose()) / 2;

  if (spec.link == Link::logit && beta.cwiseAbs().maxCoeff() > options.separation_bound) {
    throw SeparationError("logistic coefficients diverge (|beta| > " +
                          std::to_string(options.separation_bound) +
                          "); the data are separated");
  }
  if (spec.link == Link::log) {
    const double top = prob.maxCoeff();
    if (top > 1 - 1e-7 || (stalled && top > 1 - 1e-4)) {
      result.converged = false;
      throw BoundaryError("log-link maximum lies on the p = 1 boundary", std::move(result));
    }
  }
  if (stalled) {
    result.converged = result.gradient_max_norm < std::sqrt(options.gradient_tolerance);
  }
  return result;
}

double stratum_effect(const GlmFit& fit, std::string_view term, std::string_view modifier,
                      double modifier_level) {
  const Term main{{std::string(term)}};
  const Term mod{{std::string(modifier)}};
  if (!fit.spec.contains(main)) throw MissingTermError("model has no term '" + std::string(term) + "'");
  if (!fit.spec.contains(mod)) {
    throw MissingTermError("model has no term '" + std::string(modifier) + "'");
  }
  double eta = fit.coefficient(term);
  const Term product{{std::string(term), std::string(modifier)}};
  if (fit.spec.contains(product) && modifier_level != 0) {
    eta += modifier_level * fit.coefficient(product.name());
  }
  return std::exp(eta);
}

LrtResult lrt(const GlmFit& full, const GlmFit& reduced) {
  if (full.spec.link != reduced.spec.link) throw NestingError("models use different links");
  if (!(full.data == reduced.data)) throw NestingError("models were fitted to different data");
  for (const auto& t : reduced.spec.terms) {
    if (!full.spec.contains(t)) {
      throw NestingError("reduced term '" + t.name() + "' is not in the full model");
    }
  }
  LrtResult r;
  r.df = static_cast<int>(full.spec.terms.size() - reduced.spec.terms.size());
  r.statistic = std::max(0.0, 2 * (full.loglik - reduced.loglik));
  r.p_value = r.df == 0 ? 1.0 : chi_square_upper(r.statistic, r.df);
  r.note = std::string(kTermSelectionNote);
  return r;
}

std::pair<double, double> standardized_risks(const GlmFit& fit, const Dataset& data,
                                             std::string_view exposure) {
  const auto j = data.index_of(exposure);
  double r1 = 0, r0 = 0, total = 0;
  for (auto pat : data.patterns()) {
    pat.x[j] = 1;
    r1 += pat.trials * predict(fit, pat.x);
    pat.x[j] = 0;
    r0 += pat.trials * predict(fit, pat.x);
    total += pat.trials;
  }
  return {r1 / total, r0 / total};
}

namespace {

EffectEstimate percentile_estimate(EffectKind kind, double point, std::vector<double> replicates,
                                   double level) {
  EffectEstimate e;
  e.kind = kind;
  e.point = point;
  e.level = level;
  if (replicates.size() < 2) {
    e.ci_low = e.ci_high = point;
    e.interval = IntervalMethod::none;
    return e;
  }
  double mean = 0;
  for (double r : replicates) mean += r;
  mean /= static_cast<double>(replicates.size());
  double ss = 0;
  for (double r : replicates) ss += (r - mean) * (r - mean);
  e.se_t = std::sqrt(ss / static_cast<double>(replicates.size() - 1));
  std::sort(replicates.begin(), replicates.end());
  const double alpha = (1 - level) / 2;
  e.ci_low = std::min(point, from_transformed(kind, quantile_sorted(replicates, alpha)));
  e.ci_high = std::max(point, from_transformed(kind, quantile_sorted(replicates, 1 - alpha)));
  e.interval = IntervalMethod::bootstrap_percentile;
  return e;
}

}  // namespace

StandardizedEffects standardize(const GlmFit& fit, const Dataset& data, std::string_view exposure,
                                const StandardizeOptions& options) {
  const auto j = data.index_of(exposure);
  const auto patterns = data.patterns();
  for (const auto& pat : patterns) {
    if (pat.x[j] != 0 && pat.x[j] != 1) throw DomainError("exposure must be binary");
  }

  StandardizedEffects out;
  std::tie(out.risk_exposed, out.risk_unexposed) = standardized_risks(fit, data, exposure);

  // Individuals are resampled with replacement: multinomial draw over the
  // (pattern, outcome) cells.
  std::vector<double> cell_weight;
  for (const auto& pat : patterns) {
    cell_weight.push_back(pat.events);
    cell_weight.push_back(pat.trials - pat.events);
  }
  const double total = data.total_trials();
  const auto n_individuals = static_cast<long long>(std::llround(total));

  std::vector<double> rep_or, rep_rr, rep_rd;
  for (int r = 0; r < options.resamples; ++r) {
    auto gen = substream(options.seed, static_cast<std::uint64_t>(r));
    Dataset boot(data.names());
    long long remaining = n_individuals;
    double remaining_weight = total;
    for (std::size_t cell = 0; cell < cell_weight.size(); ++cell) {
      long long draw = 0;
      if (remaining > 0 && cell_weight[cell] > 0) {
        const double prob = std::min(1.0, cell_weight[cell] / remaining_weight);
        draw = std::binomial_distribution<long long>(remaining, prob)(gen);
      }
      remaining -= draw;
      remaining_weight -= cell_weight[cell];
      if (draw == 0) continue;
      const auto& pat = patterns[cell / 2];
      const bool event_cell = cell % 2 == 0;
      boot.add_group(pat.x, event_cell ? static_cast<double>(draw) : 0.0,
                     static_cast<double>(draw));
    }
    try {
      const auto refit = glm::fit(boot, fit.spec);
      if (!refit.converged) {
        ++out.failed_resamples;
        continue;
      }
      const auto [r1, r0] = standardized_risks(refit, data, exposure);
      const double lor = std::log(measure_from_risks(EffectKind::OR, r1, r0));
      const double lrr = std::log(measure_from_risks(EffectKind::RR, r1, r0));
      if (!std::isfinite(lor) || !std::isfinite(lrr)) {
        ++out.failed_resamples;
        continue;
      }
      rep_or.push_back(lor);
      rep_rr.push_back(lrr);
      rep_rd.push_back(r1 - r0);
    } catch (const Error&) {
      ++out.failed_resamples;
    }
  }

  const double r1 = out.risk_exposed, r0 = out.risk_unexposed;
  out.odds_ratio = percentile_estimate(EffectKind::OR, measure_from_risks(EffectKind::OR, r1, r0),
                                       std::move(rep_or), options.level);
  out.risk_ratio = percentile_estimate(EffectKind::RR, measure_from_risks(EffectKind::RR, r1, r0),
                                       std::move(rep_rr), options.level);
  out.risk_difference = percentile_estimate(EffectKind::RD, r1 - r0, std::move(rep_rd),
                                            options.level);
  return out;
}

}  // namespace effectport::glm
