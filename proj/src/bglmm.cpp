#include "effectport/bglmm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "effectport/error.hpp"
#include "effectport/quadrature.hpp"
#include "effectport/rng.hpp"
#include "effectport/stats.hpp"

namespace effectport::bglmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kSqrt2 = 1.4142135623730951;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double log_choose(double n, double x) {
  return std::lgamma(n + 1) - std::lgamma(x + 1) - std::lgamma(n - x + 1);
}

// Log binomial likelihood in logit form, without the combinatorial term.
double arm_kernel(double events, double total, double eta) {
  return events * eta - total * softplus(eta);
}

// Integrand over decorrelated z = L^{-1}(nu0, nu1), L = chol(Sigma).
struct StudyIntegrand {
  double x0, n0, x1, n1;
  double mu0, mu1;
  double l11, l21, l22;

  double log_value(double z1, double z2) const {
    const double eta0 = mu0 + l11 * z1;
    const double eta1 = mu1 + l21 * z1 + l22 * z2;
    return arm_kernel(x0, n0, eta0) + arm_kernel(x1, n1, eta1) - 0.5 * (z1 * z1 + z2 * z2) -
           kLog2Pi;
  }

  // Gradient and negative Hessian of log_value.
  void derivatives(double z1, double z2, std::array<double, 2>& g,
                   std::array<double, 3>& neg_h) const {
    const double p0 = logistic(mu0 + l11 * z1);
    const double p1 = logistic(mu1 + l21 * z1 + l22 * z2);
    const double r0 = x0 - n0 * p0, r1 = x1 - n1 * p1;
    const double a0 = n0 * p0 * (1 - p0), a1 = n1 * p1 * (1 - p1);
    g = {l11 * r0 + l21 * r1 - z1, l22 * r1 - z2};
    neg_h = {l11 * l11 * a0 + l21 * l21 * a1 + 1, l21 * l22 * a1, l22 * l22 * a1 + 1};
  }
};

StudyIntegrand make_integrand(const Params& p, const StudyRow& s) {
  const double l22 = p.sigma1 * std::sqrt(std::max(0.0, 1 - p.rho * p.rho));
  return {s.c_events, s.c_total, s.t_events, s.t_total, p.mu0, p.mu1,
          p.sigma0, p.rho * p.sigma1, l22};
}

std::vector<StudyRow> canonical_order(std::vector<StudyRow> studies) {
  std::sort(studies.begin(), studies.end(), [](const StudyRow& a, const StudyRow& b) {
    return std::tie(a.c_events, a.c_total, a.t_events, a.t_total, a.study_id, a.meta_id) <
           std::tie(b.c_events, b.c_total, b.t_events, b.t_total, b.study_id, b.meta_id);
  });
  return studies;
}

double objective(const Vector5& theta, const std::vector<StudyRow>& studies, int order) {
  const double ll = loglik(Params::from_unconstrained(theta), studies, order);
  return -ll;
}

Vector5 central_gradient(const Vector5& theta, const std::vector<StudyRow>& studies, int order,
                         double step) {
  Vector5 g;
  for (int i = 0; i < 5; ++i) {
    Vector5 up = theta, down = theta;
    up(i) += step;
    down(i) -= step;
    g(i) = (loglik(Params::from_unconstrained(up), studies, order) -
            loglik(Params::from_unconstrained(down), studies, order)) /
           (2 * step);
  }
  return g;
}

Matrix5 central_hessian(const Vector5& theta, const std::vector<StudyRow>& studies, int order,
                        double h) {
  auto f = [&](const Vector5& t) { return loglik(Params::from_unconstrained(t), studies, order); };
  const double f0 = f(theta);
  Matrix5 H;
  for (int i = 0; i < 5; ++i) {
    Vector5 up = theta, down = theta;
    up(i) += h;
    down(i) -= h;
    H(i, i) = (f(up) - 2 * f0 + f(down)) / (h * h);
    for (int j = 0; j < i; ++j) {
      Vector5 pp = theta, pm = theta, mp = theta, mm = theta;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
    }
  }
  return H;
}

struct StartResult {
  Vector5 theta;
  double loglik = -std::numeric_limits<double>::infinity();
  Vector5 gradient;
  bool converged = false;
  int iterations = 0;
};

// BFGS on the negative log-likelihood.
StartResult bfgs(Vector5 x, const std::vector<StudyRow>& studies, const FitOptions& opt) {
  StartResult r;
  double f = objective(x, studies, opt.order);
  Vector5 g = -central_gradient(x, studies, opt.order, opt.gradient_step);
  Matrix5 hinv = Matrix5::Identity();
  bool fresh = true;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    if (g.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
      r.converged = true;
      break;
    }
    Vector5 d = -hinv * g;
    if (g.dot(d) >= 0) {
      hinv.setIdentity();
      d = -g;
      fresh = true;
    }
    const double len = d.norm();
    if (len > 2) d *= 2 / len;

    double step = 1;
    double f_new = f;
    Vector5 x_new = x;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, step /= 2) {
      x_new = x + step * d;
      f_new = objective(x_new, studies, opt.order);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * g.dot(d)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (fresh) break;
      hinv.setIdentity();
      fresh = true;
      continue;
    }
    const Vector5 g_new = -central_gradient(x_new, studies, opt.order, opt.gradient_step);
    const Vector5 s = x_new - x;
    const Vector5 y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      if (fresh) hinv *= sy / y.dot(y);
      const double rho_k = 1 / sy;
      const Matrix5 left = Matrix5::Identity() - rho_k * s * y.transpose();
      hinv = left * hinv * left.transpose() + rho_k * s * s.transpose();
      fresh = false;
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }
  r.theta = x;
  r.loglik = -f;
  r.gradient = -g;
  r.iterations = iter;
  if (!r.converged) r.converged = g.cwiseAbs().maxCoeff() < opt.gradient_tolerance;
  return r;
}

double sample_sd(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

Vector5 Params::to_unconstrained() const {
  Vector5 t;
  t << mu0, mu1, std::log(sigma0), std::log(sigma1), std::atanh(rho);
  return t;
}

Params Params::from_unconstrained(const Vector5& theta) {
  const double floor = std::log(kSigmaFloor);
  Params p;
  p.mu0 = theta(0);
  p.mu1 = theta(1);
  p.sigma0 = std::exp(std::max(theta(2), floor));
  p.sigma1 = std::exp(std::max(theta(3), floor));
  p.rho = std::clamp(std::tanh(theta(4)), -kRhoBound, kRhoBound);
  return p;
}

double study_loglik(const Params& params, const StudyRow& study, int order) {
  if (order < 5) throw DomainError("quadrature order must be at least 5");
  const auto f = make_integrand(params, study);

  // Newton ascent to the mode; log_value is strictly concave.
  double z1 = 0, z2 = 0;
  double current = f.log_value(z1, z2);
  std::array<double, 2> g{};
  std::array<double, 3> nh{};
  for (int it = 0; it < 200; ++it) {
    f.derivatives(z1, z2, g, nh);
    const double det = nh[0] * nh[2] - nh[1] * nh[1];
    const double d1 = (nh[2] * g[0] - nh[1] * g[1]) / det;
    const double d2 = (nh[0] * g[1] - nh[1] * g[0]) / det;
    double scale = 1;
    double next = current;
    for (int halving = 0; halving < 60; ++halving, scale /= 2) {
      next = f.log_value(z1 + scale * d1, z2 + scale * d2);
      if (next >= current) break;
    }
    if (!(next >= current)) break;
    z1 += scale * d1;
    z2 += scale * d2;
    current = next;
    if (std::max(std::abs(scale * d1), std::abs(scale * d2)) < 1e-11) break;
  }
  f.derivatives(z1, z2, g, nh);

  // Scale B with B B' = (-H)^{-1}; B = C^{-T} for C = chol(-H).
  const double c11 = std::sqrt(nh[0]);
  const double c21 = nh[1] / c11;
  const double c22 = std::sqrt(nh[2] - c21 * c21);
  // C^{-T} = [[1/c11, -c21/(c11 c22)], [0, 1/c22]]
  const double b11 = 1 / c11, b12 = -c21 / (c11 * c22), b22 = 1 / c22;
  const double log_det_b = -std::log(c11) - std::log(c22);

  const auto& rule = gauss_hermite(order);
  const std::size_t n = rule.nodes.size();
  std::vector<double> terms;
  terms.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t1 = kSqrt2 * rule.nodes[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double t2 = kSqrt2 * rule.nodes[j];
      const double u1 = z1 + b11 * t1 + b12 * t2;
      const double u2 = z2 + b22 * t2;
      terms.push_back(rule.log_adaptive_weights[i] + rule.log_adaptive_weights[j] +
                      f.log_value(u1, u2));
    }
  }
  const double lse = log_sum_exp(terms);
  const double result = std::log(2.0) + log_det_b + lse +
                        log_choose(study.c_total, study.c_events) +
                        log_choose(study.t_total, study.t_events);
  if (!std::isfinite(result)) {
    throw NumericalUnderflowError("study " + study.study_id + ": marginal likelihood underflows");
  }
  return result;
}

double loglik(const Params& params, const std::vector<StudyRow>& studies, int order) {
  double total = 0;
  for (const auto& s : studies) total += study_loglik(params, s, order);
  return total;
}

Vector5 loglik_gradient(const Vector5& theta, const std::vector<StudyRow>& studies, int order,
                        double step) {
  return central_gradient(theta, studies, order, step);
}

Fit fit(const std::vector<StudyRow>& input, const FitOptions& options) {
  if (input.size() < 5) {
    throw InsufficientStudiesError("bivariate model needs at least 5 studies");
  }
  for (const auto& s : input) s.validate();
  const auto studies = canonical_order(input);

  Fit out;
  out.order = options.order;
  out.k = static_cast<int>(studies.size());
  if (out.k < 10) out.warnings.push_back("fewer than 10 studies; estimates may be unstable");

  double x0 = 0, n0 = 0, x1 = 0, n1 = 0;
  std::vector<double> logit0, logit1;
  bool c_event = false, c_non = false, t_event = false, t_non = false;
  for (const auto& s : studies) {
    x0 += s.c_events;
    n0 += s.c_total;
    x1 += s.t_events;
    n1 += s.t_total;
    logit0.push_back(logit((s.c_events + 0.5) / (s.c_total + 1)));
    logit1.push_back(logit((s.t_events + 0.5) / (s.t_total + 1)));
    c_event |= s.c_events > 0;
    c_non |= s.c_events < s.c_total;
    t_event |= s.t_events > 0;
    t_non |= s.t_events < s.t_total;
  }
  if (!(c_event && c_non && t_event && t_non)) {
    throw DomainError("each arm needs both events and non-events across studies");
  }
  const double mu0 = logit((x0 + 0.5) / (n0 + 1));
  const double mu1 = logit((x1 + 0.5) / (n1 + 1));
  const double sd0 = std::max(0.1, sample_sd(logit0));
  const double sd1 = std::max(0.1, sample_sd(logit1));

  StartResult best;
  bool any_converged = false;
  for (double rho : {-0.5, 0.0, 0.5}) {
    const Params start{mu0, mu1, sd0, sd1, rho};
    auto r = bfgs(start.to_unconstrained(), studies, options);
    out.iterations += r.iterations;
    const bool better = (r.converged && !any_converged) ||
                        (r.converged == any_converged && r.loglik > best.loglik);
    if (better) {
      best = r;
      any_converged = any_converged || r.converged;
    }
  }
  if (!any_converged) {
    throw NonConvergenceError("no start reached a stationary point within " +
                              std::to_string(options.max_iterations) + " iterations");
  }

  out.params = Params::from_unconstrained(best.theta);
  out.loglik = best.loglik;
  out.converged = true;
  out.gradient_max_norm = best.gradient.cwiseAbs().maxCoeff();
  const double floor = std::log(kSigmaFloor);
  out.boundary = best.theta(2) <= floor || best.theta(3) <= floor;

  // Evaluate the Hessian at the representable point so floored coordinates
  // show up as flat directions.
  const Vector5 at = out.params.to_unconstrained();
  const Matrix5 neg_h = -central_hessian(at, studies, options.order, options.hessian_step);
  Eigen::SelfAdjointEigenSolver<Matrix5> eig(neg_h);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0 ||
      eig.eigenvalues().minCoeff() < 1e-10 * eig.eigenvalues().maxCoeff()) {
    out.covariance_note = "observed information is singular or not positive definite";
  } else {
    Matrix5 cov = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                  eig.eigenvectors().transpose();
    out.covariance = (cov + cov.transpose()) / 2;
  }
  if (out.boundary) out.warnings.push_back("a random-effect SD is at its lower bound");
  return out;
}

double marginal_risk(double mu, double sigma, int order) {
  return normal_expectation([](double eta) { return logistic(eta); }, mu, sigma, order);
}

double marginal_transformed(const Params& params, EffectKind kind, int order) {
  const double p0 = marginal_risk(params.mu0, params.sigma0, order);
  const double p1 = marginal_risk(params.mu1, params.sigma1, order);
  return to_transformed(kind, measure_from_risks(kind, p1, p0));
}

Vector5 marginal_gradient(const Params& params, EffectKind kind, double step, int order) {
  const Vector5 theta = params.to_unconstrained();
  Vector5 g;
  for (int i = 0; i < 5; ++i) {
    Vector5 up = theta, down = theta;
    up(i) += step;
    down(i) -= step;
    g(i) = (marginal_transformed(Params::from_unconstrained(up), kind, order) -
            marginal_transformed(Params::from_unconstrained(down), kind, order)) /
           (2 * step);
  }
  return g;
}

EffectEstimate marginal(const Fit& fit, EffectKind kind, double level) {
  const double t = marginal_transformed(fit.params, kind);
  if (!fit.covariance) {
    EffectEstimate e;
    e.kind = kind;
    e.level = level;
    e.point = from_transformed(kind, t);
    e.ci_low = e.ci_high = e.point;
    e.interval = IntervalMethod::none;
    return e;
  }
  const Vector5 g = marginal_gradient(fit.params, kind);
  const double var = g.dot(*fit.covariance * g);
  return wald_estimate(kind, t, std::sqrt(std::max(0.0, var)), level);
}

double conditional_treatment_risk(const Params& p, double p0, bool plug_in, int order) {
  if (!(p0 > 0 && p0 < 1)) throw DomainError("baseline risk must lie in (0,1)");
  const double nu0 = logit(p0) - p.mu0;
  const double mean = p.mu1 + p.rho * (p.sigma1 / p.sigma0) * nu0;
  if (plug_in) return logistic(mean);
  const double sd = p.sigma1 * std::sqrt(std::max(0.0, 1 - p.rho * p.rho));
  return marginal_risk(mean, sd, order);
}

ConditionalCurve conditional_curve(const Fit& fit, EffectKind kind, const std::vector<double>& grid,
                                   const CurveOptions& options) {
  for (double p0 : grid) {
    if (!(p0 > 0 && p0 < 1)) throw DomainError("curve grid must lie inside (0,1)");
  }
  ConditionalCurve curve;
  curve.kind = kind;
  curve.level = options.level;
  for (double p0 : grid) {
    const double value = measure_from_risks(
        kind, conditional_treatment_risk(fit.params, p0, options.plug_in, options.order), p0);
    curve.points.push_back({p0, value, value, value, value, value});
  }
  if (!fit.covariance) return curve;

  Eigen::LLT<Matrix5> llt(*fit.covariance);
  if (llt.info() != Eigen::Success) return curve;
  const Matrix5 chol = llt.matrixL();
  const Vector5 theta = fit.params.to_unconstrained();

  // All normals are drawn up front in a fixed order, so every level sees the
  // same simulated parameters.
  auto gen = substream(options.seed, 0);
  std::normal_distribution<double> normal;
  const auto n_draws = static_cast<std::size_t>(options.draws);
  std::vector<std::vector<double>> compat(grid.size()), pred(grid.size());
  for (std::size_t s = 0; s < n_draws; ++s) {
    Vector5 eps;
    for (int i = 0; i < 5; ++i) eps(i) = normal(gen);
    const double resid = normal(gen);
    const Params p = Params::from_unconstrained(theta + chol * eps);
    const double cond_sd = p.sigma1 * std::sqrt(std::max(0.0, 1 - p.rho * p.rho));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double p0 = grid[g];
      const double mean = p.mu1 + p.rho * (p.sigma1 / p.sigma0) * (logit(p0) - p.mu0);
      const double p1 =
          options.plug_in ? logistic(mean) : marginal_risk(mean, cond_sd, options.order);
      compat[g].push_back(measure_from_risks(kind, p1, p0));
      pred[g].push_back(measure_from_risks(kind, logistic(mean + cond_sd * resid), p0));
    }
  }

  const double alpha = (1 - options.level) / 2;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto& pt = curve.points[g];
    std::sort(compat[g].begin(), compat[g].end());
    std::sort(pred[g].begin(), pred[g].end());
    pt.compat_low = std::min(pt.value, quantile_sorted(compat[g], alpha));
    pt.compat_high = std::max(pt.value, quantile_sorted(compat[g], 1 - alpha));
    pt.pred_low = std::min(pt.compat_low, quantile_sorted(pred[g], alpha));
    pt.pred_high = std::max(pt.compat_high, quantile_sorted(pred[g], 1 - alpha));
  }
  curve.has_bands = true;
  return curve;
}

std::vector<double> linear_grid(double lo, double hi, int n) {
  if (n < 2) return {lo};
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

std::vector<StudyRow> simulate_studies(const Params& params, int k, int arm_size,
                                       std::uint64_t seed, const std::string& meta_id) {
  std::vector<StudyRow> out;
  const double l22 = params.sigma1 * std::sqrt(1 - params.rho * params.rho);
  for (int i = 0; i < k; ++i) {
    auto gen = substream(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    const double z1 = normal(gen), z2 = normal(gen);
    const double p0 = logistic(params.mu0 + params.sigma0 * z1);
    const double p1 = logistic(params.mu1 + params.rho * params.sigma1 * z1 + l22 * z2);
    StudyRow row;
    row.meta_id = meta_id;
    row.study_id = "S" + std::to_string(i + 1);
    row.c_total = row.t_total = arm_size;
    row.c_events = static_cast<double>(std::binomial_distribution<int>(arm_size, p0)(gen));
    row.t_events = static_cast<double>(std::binomial_distribution<int>(arm_size, p1)(gen));
    out.push_back(row);
  }
  return out;
}

}  // namespace effectport::bglmm
