#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "effectport/bglmm.hpp"
#include "effectport/error.hpp"
#include "effectport/quadrature.hpp"
#include "effectport/stats.hpp"
#include "oracles.hpp"

using namespace effectport;
using doctest::Approx;
using bglmm::Params;

namespace {

const std::vector<StudyRow> kFiveStudies{
    {"q", "s1", 12, 60, 20, 58},   {"q", "s2", 40, 120, 55, 125}, {"q", "s3", 3, 35, 9, 33},
    {"q", "s4", 88, 300, 130, 290}, {"q", "s5", 21, 80, 22, 84},
};

const Params kRecovery{-0.5, -1.5, 0.8, 0.6, 0.5};

bglmm::Fit fitted(const Params& p) {
  bglmm::Fit f;
  f.params = p;
  f.converged = true;
  return f;
}

}  // namespace

TEST_CASE("Gauss-Hermite rules") {
  for (int order : {1, 5, 20, 60, 120}) {
    const auto& r = gauss_hermite(order);
    REQUIRE(r.nodes.size() == static_cast<std::size_t>(order));
    CHECK(std::is_sorted(r.nodes.begin(), r.nodes.end()));
    double s = 0;
    for (double w : r.weights) s += w;
    CHECK(s == Approx(std::sqrt(M_PI)).epsilon(1e-12));
  }
  // Moments of the standard normal are exact up to degree 2n-1.
  CHECK(normal_expectation([](double z) { return z * z; }, 0, 1, 5) == Approx(1.0).epsilon(1e-13));
  CHECK(normal_expectation([](double z) { return z * z * z * z; }, 0, 1, 5) ==
        Approx(3.0).epsilon(1e-13));
  CHECK(normal_expectation([](double z) { return z; }, 1.5, 2, 3) == Approx(1.5).epsilon(1e-13));
  CHECK_THROWS_AS(gauss_hermite(0), DomainError);
}

TEST_CASE("parameter transform round trip") {
  const Params p{0.3, -1.2, 0.7, 1.9, -0.35};
  const auto q = Params::from_unconstrained(p.to_unconstrained());
  CHECK(q.mu0 == Approx(p.mu0).epsilon(1e-15));
  CHECK(q.sigma1 == Approx(p.sigma1).epsilon(1e-14));
  CHECK(q.rho == Approx(p.rho).epsilon(1e-14));
  bglmm::Vector5 extreme;
  extreme << 0, 0, -50, -50, 40;
  const auto e = Params::from_unconstrained(extreme);
  CHECK(e.sigma0 == Approx(bglmm::kSigmaFloor).epsilon(1e-14));
  CHECK(e.rho < 1);
}

TEST_CASE("degenerate random effects give independent binomials") {
  const Params p{-0.4, -1.1, 1e-8, 1e-8, 0};
  double expected = 0;
  for (const auto& s : kFiveStudies) {
    expected += oracle::binomial_logpmf(s.c_events, s.c_total, logistic(p.mu0)) +
                oracle::binomial_logpmf(s.t_events, s.t_total, logistic(p.mu1));
  }
  CHECK(bglmm::loglik(p, kFiveStudies) == Approx(expected).epsilon(1e-9));
}

TEST_CASE("quadrature refinement") {
  for (const auto& p : {Params{-0.6, -1.0, 0.5, 0.7, 0.3}, Params{0.2, -0.3, 1.4, 0.9, -0.6}}) {
    const double l20 = bglmm::loglik(p, kFiveStudies, 20);
    const double l40 = bglmm::loglik(p, kFiveStudies, 40);
    const double l80 = bglmm::loglik(p, kFiveStudies, 80);
    CHECK(std::abs(l20 - l80) < 1e-8);
    CHECK(std::abs(l20 - l40) < 1e-6);
  }
  CHECK_THROWS_AS(bglmm::study_loglik(kRecovery, kFiveStudies[0], 4), DomainError);
}

TEST_CASE("loglik symmetry under swapping arms") {
  const StudyRow s{"m", "s", 25, 50, 15, 30};
  const StudyRow swapped{"m", "s", 15, 30, 25, 50};
  const Params p{0, 0, 0.7, 1.3, 0.4};
  const Params q{0, 0, 1.3, 0.7, 0.4};
  CHECK(bglmm::study_loglik(p, s) == Approx(bglmm::study_loglik(q, swapped)).epsilon(1e-12));
}

TEST_CASE("marginal risk") {
  CHECK(bglmm::marginal_risk(0, 1) == Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(bglmm::marginal_risk(-1, 0.5) - oracle::marginal_risk_midpoint(-1, 0.5)) < 1e-8);
  CHECK(std::abs(bglmm::marginal_risk(0.7, 2.0) - oracle::marginal_risk_midpoint(0.7, 2.0)) < 1e-8);
  CHECK(bglmm::marginal_risk(-1.3, 1e-9) == Approx(logistic(-1.3)).epsilon(1e-12));

  const auto f = fitted({-1.0, -0.2, 1e-9, 1e-9, 0});
  CHECK(bglmm::marginal(f, EffectKind::OR).point == Approx(std::exp(0.8)).epsilon(1e-9));
  CHECK(bglmm::marginal(f, EffectKind::OR).interval == IntervalMethod::none);
}

TEST_CASE("marginal measures agree with the tabular formulas") {
  const auto f = fitted(kRecovery);
  const double p1 = bglmm::marginal_risk(kRecovery.mu1, kRecovery.sigma1);
  const double p0 = bglmm::marginal_risk(kRecovery.mu0, kRecovery.sigma0);
  for (auto k : kAllEffectKinds) {
    CHECK(bglmm::marginal(f, k).point == Approx(measure_from_risks(k, p1, p0)).epsilon(1e-14));
  }
}

TEST_CASE("delta-method gradient matches finite differences") {
  for (auto k : kAllEffectKinds) {
    const auto g = bglmm::marginal_gradient(kRecovery, k);
    const auto theta = kRecovery.to_unconstrained();
    const auto numeric = oracle::central_gradient(
        [&](const std::vector<double>& t) {
          return bglmm::marginal_transformed(
              Params::from_unconstrained(Eigen::Map<const bglmm::Vector5>(t.data())), k);
        },
        std::vector<double>(theta.data(), theta.data() + 5), 1e-4);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(g[i] - numeric[i]) < 1e-4);
  }
}

TEST_CASE("fit on simulated data") {
  const auto studies = bglmm::simulate_studies(kRecovery, 30, 200, 7);
  const auto fit = bglmm::fit(studies);
  CHECK(fit.converged);
  CHECK(fit.gradient_max_norm < 1e-5);
  CHECK(std::isfinite(fit.loglik));
  CHECK(fit.k == 30);
  REQUIRE(fit.covariance.has_value());
  const bglmm::Matrix5 cov = *fit.covariance;
  CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<bglmm::Matrix5> es(cov);
  CHECK(es.eigenvalues().minCoeff() > 0);

  SUBCASE("local maximum in every coordinate") {
    const auto theta = fit.params.to_unconstrained();
    for (int i = 0; i < 5; ++i) {
      for (double h : {-1e-3, 1e-3}) {
        bglmm::Vector5 t = theta;
        t[i] += h;
        CHECK(bglmm::loglik(Params::from_unconstrained(t), studies) < fit.loglik);
      }
    }
  }
  SUBCASE("study order does not matter") {
    auto shuffled = studies;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = bglmm::fit(shuffled);
    CHECK(again.params.mu0 == fit.params.mu0);
    CHECK(again.params.rho == fit.params.rho);
    CHECK(again.loglik == fit.loglik);
  }
  SUBCASE("conditional curves") {
    const auto grid = bglmm::linear_grid(0.1, 0.7, 13);
    bglmm::CurveOptions wide, narrow;
    wide.draws = narrow.draws = 1000;
    narrow.level = 0.5;
    for (auto k : kAllEffectKinds) {
      const auto c95 = bglmm::conditional_curve(fit, k, grid, wide);
      const auto c50 = bglmm::conditional_curve(fit, k, grid, narrow);
      REQUIRE(c95.has_bands);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& a = c95.points[i];
        const auto& b = c50.points[i];
        CHECK(a.compat_low <= a.value);
        CHECK(a.value <= a.compat_high);
        CHECK(a.pred_low <= a.compat_low);
        CHECK(a.compat_high <= a.pred_high);
        CHECK(a.compat_low <= b.compat_low);
        CHECK(b.compat_high <= a.compat_high);
        CHECK(a.pred_low <= b.pred_low);
        CHECK(b.pred_high <= a.pred_high);
      }
      const auto again = bglmm::conditional_curve(fit, k, grid, wide);
      CHECK(again.points.back().pred_high == c95.points.back().pred_high);
    }
  }
  SUBCASE("marginal intervals") {
    for (auto k : kAllEffectKinds) {
      const auto m = bglmm::marginal(fit, k);
      CHECK(m.interval == IntervalMethod::wald);
      CHECK(m.ci_low < m.point);
      CHECK(m.point < m.ci_high);
    }
  }
}

TEST_CASE("no heterogeneity drives the SDs to the boundary") {
  std::vector<StudyRow> same;
  for (int i = 0; i < 20; ++i) same.push_back({"m", "s" + std::to_string(i), 300, 1000, 450, 1000});
  const auto fit = bglmm::fit(same);
  CHECK(fit.params.sigma0 < 0.02);
  CHECK(fit.params.sigma1 < 0.02);
  CHECK(std::abs(fit.params.mu0 - logit(0.45)) < 1e-3);
  CHECK(std::abs(fit.params.mu1 - logit(0.30)) < 1e-3);
}

TEST_CASE("conditional curve limits") {
  SUBCASE("perfectly correlated equal-scale effects give a constant OR") {
    const auto f = fitted({-0.5, -1.2, 0.8, 0.8, bglmm::kRhoBound});
    const auto c = bglmm::conditional_curve(f, EffectKind::OR, bglmm::linear_grid(0.05, 0.95, 19));
    CHECK_FALSE(c.has_bands);
    for (const auto& p : c.points) CHECK(p.value == Approx(std::exp(-0.7)).epsilon(1e-6));
  }
  SUBCASE("OR decreases with baseline risk for the recovery parameters") {
    const auto c = bglmm::conditional_curve(fitted(kRecovery), EffectKind::OR,
                                            bglmm::linear_grid(0.02, 0.98, 200));
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].value < c.points[i - 1].value);
    }
  }
  SUBCASE("plug-in variant") {
    bglmm::CurveOptions o;
    o.plug_in = true;
    const Params p = kRecovery;
    const auto c = bglmm::conditional_curve(fitted(p), EffectKind::RD, {0.3}, o);
    const double nu0 = logit(0.3) - p.mu0;
    const double p1 = logistic(p.mu1 + p.rho * p.sigma1 / p.sigma0 * nu0);
    CHECK(c.points[0].value == Approx(p1 - 0.3).epsilon(1e-12));
  }
}

TEST_CASE("fit preconditions") {
  const std::vector<StudyRow> four(kFiveStudies.begin(), kFiveStudies.begin() + 4);
  CHECK_THROWS_AS(bglmm::fit(four), InsufficientStudiesError);
  std::vector<StudyRow> no_events = kFiveStudies;
  for (auto& s : no_events) s.c_events = 0;
  CHECK_THROWS_AS(bglmm::fit(no_events), DomainError);
  const auto small = bglmm::fit(kFiveStudies);
  CHECK_FALSE(small.warnings.empty());
}

TEST_CASE("simulation is deterministic") {
  const auto a = bglmm::simulate_studies(kRecovery, 12, 100, 99);
  const auto b = bglmm::simulate_studies(kRecovery, 12, 100, 99);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].t_events == b[i].t_events);
    CHECK(a[i].c_events == b[i].c_events);
  }
  // Each study's draw depends on its index only.
  const auto longer = bglmm::simulate_studies(kRecovery, 20, 100, 99);
  CHECK(longer[5].t_events == a[5].t_events);
}
