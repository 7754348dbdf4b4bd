#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "effectport/error.hpp"
#include "effectport/fixtures.hpp"
#include "effectport/meta.hpp"

using namespace effectport;
using doctest::Approx;
using fixtures::Example;
using meta::Method;

namespace {

std::vector<StudyRow> heterogeneous(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n(50, 400);
  std::uniform_real_distribution<double> risk(0.05, 0.6);
  std::vector<StudyRow> out;
  for (int i = 0; i < k; ++i) {
    const double nt = n(rng), nc = n(rng);
    const double p0 = risk(rng), p1 = risk(rng);
    out.push_back({"m", "s" + std::to_string(i), std::round(p1 * nt), nt, std::round(p0 * nc), nc});
  }
  return out;
}

}  // namespace

TEST_CASE("study effects") {
  const auto e = meta::study_effects(fixtures::studies(Example::B), EffectKind::OR);
  REQUIRE(e.size() == 2);
  CHECK(std::exp(e[0].y) == Approx(8.0 / 3).epsilon(1e-12));
  CHECK(std::exp(e[1].y) == Approx(3.5).epsilon(1e-12));
  CHECK(e[0].v == Approx(1.0 / 40 + 1.0 / 60 + 1.0 / 20 + 1.0 / 80).epsilon(1e-12));
  CHECK(e[1].v == Approx(1.0 / 60 + 1.0 / 40 + 1.0 / 30 + 1.0 / 70).epsilon(1e-12));
  CHECK(e[0].v == Approx(0.10417).epsilon(1e-4));
  CHECK(e[1].v == Approx(0.08929).epsilon(1e-4));

  const std::vector<StudyRow> zero{{"m", "a", 0, 20, 5, 20}, {"m", "b", 3, 20, 5, 20}};
  for (auto k : kAllEffectKinds) {
    const auto z = meta::study_effects(zero, k);
    CHECK(std::isfinite(z[0].y));
    CHECK(std::isfinite(z[0].v));
    CHECK(z[0].v > 0);
  }
  CHECK_THROWS_AS(meta::study_effects(zero, EffectKind::OR, 0), ZeroCellError);

  const std::vector<StudyRow> twins{{"m", "a", 7, 30, 5, 30}, {"m", "b", 7, 30, 5, 30}};
  const auto t = meta::study_effects(twins, EffectKind::RR);
  CHECK(t[0].y == t[1].y);
  CHECK(t[0].v == t[1].v);
}

TEST_CASE("REML reproduces the pooled worked-example estimates") {
  const auto b_or = meta::two_stage(fixtures::studies(Example::B), EffectKind::OR);
  CHECK(b_or.tau2 == 0);
  CHECK(b_or.pooled.point == Approx(3.09).epsilon(0.01 / 3.09));
  CHECK(b_or.pooled.ci_low == Approx(2.01).epsilon(0.01 / 2.01));
  CHECK(b_or.pooled.ci_high == Approx(4.74).epsilon(0.01 / 4.74));

  const auto b_rr = meta::two_stage(fixtures::studies(Example::B), EffectKind::RR);
  CHECK(b_rr.pooled.point == Approx(2.0).epsilon(1e-9));
  CHECK(b_rr.pooled.ci_low == Approx(1.52).epsilon(0.01 / 1.52));
  CHECK(b_rr.pooled.ci_high == Approx(2.63).epsilon(0.01 / 2.63));

  const auto a_or = meta::two_stage(fixtures::studies(Example::A), EffectKind::OR);
  CHECK(a_or.pooled.point == Approx(8.0 / 3).epsilon(1e-9));
  CHECK(a_or.pooled.ci_low == Approx(1.70).epsilon(0.01 / 1.7));
  CHECK(a_or.pooled.ci_high == Approx(4.17).epsilon(0.01 / 4.17));

  const auto a_rr = meta::two_stage(fixtures::studies(Example::A), EffectKind::RR);
  CHECK(a_rr.tau2 > 0);
  CHECK(a_rr.pooled.point >= 1.45);
  CHECK(a_rr.pooled.point <= 1.60);
  CHECK(std::abs(a_rr.pooled.ci_low - 1.05) <= 0.25);
  CHECK(std::abs(a_rr.pooled.ci_high - 2.06) <= 0.25);
}

TEST_CASE("DerSimonian-Laird closed form") {
  const auto studies = heterogeneous(8, 5);
  const auto eff = meta::study_effects(studies, EffectKind::OR);
  double sw = 0, sw2 = 0, swy = 0;
  for (const auto& e : eff) {
    sw += 1 / e.v;
    sw2 += 1 / (e.v * e.v);
    swy += e.y / e.v;
  }
  const double ybar = swy / sw;
  double q = 0;
  for (const auto& e : eff) q += (e.y - ybar) * (e.y - ybar) / e.v;
  const double tau2 = std::max(0.0, (q - 7) / (sw - sw2 / sw));
  const auto fit = meta::pool(eff, Method::DL, EffectKind::OR);
  CHECK(fit.q == Approx(q).epsilon(1e-12));
  CHECK(fit.tau2 == Approx(tau2).epsilon(1e-12));
  CHECK(meta::cochran_q(eff) == Approx(q).epsilon(1e-12));
}

TEST_CASE("homogeneous studies") {
  const std::vector<meta::StudyEffect> same(5, {0.4, 0.09});
  for (auto m : {Method::FE, Method::DL, Method::REML}) {
    const auto fit = meta::pool(same, m, EffectKind::RD);
    CHECK(fit.tau2 == 0);
    CHECK(fit.pooled.point == Approx(0.4).epsilon(1e-14));
    CHECK(fit.pooled.se_t == Approx(std::sqrt(0.09 / 5)).epsilon(1e-12));
  }
  const auto fe = meta::pool(same, Method::FE, EffectKind::OR);
  const auto re = meta::pool(same, Method::REML, EffectKind::OR);
  CHECK(fe.pooled.point == re.pooled.point);
  CHECK(fe.pooled.ci_low == re.pooled.ci_low);
}

TEST_CASE("pooling invariants on heterogeneous data") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto studies = heterogeneous(3 + static_cast<int>(seed % 10), seed);
    for (auto k : kAllEffectKinds) {
      const auto eff = meta::study_effects(studies, k);
      const auto [lo, hi] = std::minmax_element(eff.begin(), eff.end(),
                                                [](auto& a, auto& b) { return a.y < b.y; });
      const auto fe = meta::pool(eff, Method::FE, k);
      for (auto m : {Method::DL, Method::REML}) {
        const auto fit = meta::pool(eff, m, k);
        const double mu = to_transformed(k, fit.pooled.point);
        CHECK(mu >= lo->y - 1e-12);
        CHECK(mu <= hi->y + 1e-12);
        CHECK(fit.tau2 >= 0);
        CHECK(fit.q >= 0);
        if (fit.tau2 > 0) CHECK(fit.pooled.se_t > fe.pooled.se_t);
        if (is_ratio(k)) {
          CHECK(std::abs(fit.pooled.ci_high / fit.pooled.point -
                         fit.pooled.point / fit.pooled.ci_low) < 1e-9);
        }
      }
      const auto reml = meta::pool(eff, Method::REML, k);
      const double at = meta::reml_objective(eff, reml.tau2);
      CHECK(at >= meta::reml_objective(eff, reml.tau2 + 1e-6));
      if (reml.tau2 >= 1e-6) CHECK(at >= meta::reml_objective(eff, reml.tau2 - 1e-6));
    }
  }
}

TEST_CASE("permuting studies leaves results bit-identical") {
  auto studies = heterogeneous(9, 42);
  std::mt19937_64 rng(1);
  for (auto m : {Method::FE, Method::DL, Method::REML}) {
    const auto ref = meta::two_stage(studies, EffectKind::RR, m);
    for (int rep = 0; rep < 5; ++rep) {
      std::shuffle(studies.begin(), studies.end(), rng);
      const auto fit = meta::two_stage(studies, EffectKind::RR, m);
      CHECK(fit.tau2 == ref.tau2);
      CHECK(fit.q == ref.q);
      CHECK(fit.pooled.point == ref.pooled.point);
      CHECK(fit.pooled.ci_low == ref.pooled.ci_low);
      CHECK(fit.pooled.ci_high == ref.pooled.ci_high);
    }
  }
}

TEST_CASE("errors and names") {
  CHECK_THROWS_AS(meta::pool({{0.1, 0.2}}, Method::REML, EffectKind::OR), InsufficientStudiesError);
  CHECK(meta::parse_method("reml") == Method::REML);
  CHECK(meta::parse_method("DL") == Method::DL);
  CHECK(meta::parse_method("fe") == Method::FE);
  CHECK_THROWS_AS(meta::parse_method("hksj"), DomainError);
  StudyRow bad{"m", "s", 5, 4, 1, 10};
  CHECK_THROWS_AS(bad.validate(), DataValidationError);
  StudyRow empty_id{"m", "", 1, 4, 1, 10};
  CHECK_THROWS_AS(empty_id.validate(), DataValidationError);
}
