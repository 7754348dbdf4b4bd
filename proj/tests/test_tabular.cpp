#include <doctest.h>

#include <cmath>
#include <random>

#include "effectport/error.hpp"
#include "effectport/fixtures.hpp"
#include "effectport/stats.hpp"
#include "effectport/tabular.hpp"

using namespace effectport;
using doctest::Approx;

namespace {

void check_interval_shape(const EffectEstimate& e) {
  CHECK(e.ci_low <= e.point);
  CHECK(e.point <= e.ci_high);
  if (is_ratio(e.kind)) {
    CHECK(e.ci_low > 0);
    CHECK(std::abs(e.ci_high / e.point - e.point / e.ci_low) < 1e-9);
  } else {
    CHECK(std::abs((e.point - e.ci_low) - (e.ci_high - e.point)) < 1e-9);
    CHECK(e.point >= -1);
    CHECK(e.point <= 1);
  }
}

TwoByTwoTable random_table(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cell(1, 300);
  return {double(cell(rng)), double(cell(rng)), double(cell(rng)), double(cell(rng))};
}

}  // namespace

TEST_CASE("zero-cell correction") {
  CHECK(correct_zero_cells({0, 10, 5, 5}) == TwoByTwoTable{0.5, 10.5, 5.5, 5.5});
  CHECK(correct_zero_cells({10, 10, 10, 10}) == TwoByTwoTable{10, 10, 10, 10});
  CHECK(correct_zero_cells({0, 0, 0, 0}) == TwoByTwoTable{0.5, 0.5, 0.5, 0.5});
  CHECK(correct_zero_cells({0, 3, 4, 5}, 1.0) == TwoByTwoTable{1, 4, 5, 6});
  CHECK_THROWS_AS(correct_zero_cells({0, 1, 1, 1}, 0), DomainError);
}

TEST_CASE("zero-cell correction is idempotent") {
  const TwoByTwoTable tables[] = {{0, 10, 5, 5}, {0, 0, 0, 0}, {3, 0, 0, 9}, {1, 2, 3, 4}};
  for (const auto& t : tables) {
    const auto once = correct_zero_cells(t);
    CHECK(correct_zero_cells(once) == once);
  }
}

TEST_CASE("point estimates and Wald intervals") {
  CHECK(effect({120, 80, 80, 120}, EffectKind::OR).point == Approx(2.25).epsilon(1e-12));
  CHECK(effect({120, 80, 80, 120}, EffectKind::RR).point == Approx(1.5).epsilon(1e-12));

  const auto e = effect({40, 60, 20, 80}, EffectKind::OR, 0.95);
  CHECK(e.point == Approx(8.0 / 3).epsilon(1e-12));
  CHECK(e.ci_low == Approx(1.42).epsilon(0.005 / 1.42));
  CHECK(e.ci_high == Approx(5.02).epsilon(0.005 / 5.02));
  CHECK(e.se_t == Approx(std::sqrt(1.0 / 40 + 1.0 / 60 + 1.0 / 20 + 1.0 / 80)));

  for (auto k : kAllEffectKinds) {
    const auto s = effect({50, 50, 50, 50}, k);
    CHECK(s.point == (k == EffectKind::RD ? 0.0 : 1.0));
  }
}

TEST_CASE("standard error formulas") {
  const TwoByTwoTable t{12, 30, 7, 41};
  const double n1 = 42, n0 = 48, p1 = 12 / n1, p0 = 7 / n0;
  CHECK(effect(t, EffectKind::RR).se_t ==
        Approx(std::sqrt(1 / 12.0 - 1 / n1 + 1 / 7.0 - 1 / n0)).epsilon(1e-14));
  CHECK(effect(t, EffectKind::RD).se_t ==
        Approx(std::sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0)).epsilon(1e-14));
  const auto rd = effect(t, EffectKind::RD, 0.9);
  CHECK(rd.ci_high - rd.point == Approx(normal_critical(0.9) * rd.se_t).epsilon(1e-12));
}

TEST_CASE("interval shape invariants on random tables") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    const auto t = random_table(rng);
    for (auto k : kAllEffectKinds) check_interval_shape(effect(t, k, 0.9));
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(effect({0, 10, 5, 5}, EffectKind::OR), ZeroCellError);
  CHECK_THROWS_AS(effect({0, 10, 5, 5}, EffectKind::RR), ZeroCellError);
  CHECK_THROWS_AS(effect({0, 0, 5, 5}, EffectKind::RD), DegenerateMarginError);
  CHECK_THROWS_AS(effect({3, 4, 0, 0}, EffectKind::OR), DegenerateMarginError);
  CHECK_THROWS_AS(effect({-1, 4, 2, 2}, EffectKind::RD), DomainError);
  CHECK_THROWS_AS(effect({1, 4, 2, 2}, EffectKind::OR, 1.0), DomainError);
  // RD tolerates zero cells without correction.
  CHECK(effect({0, 10, 5, 5}, EffectKind::RD).point == Approx(-0.5));
}

TEST_CASE("OR and RR conversion at a baseline risk") {
  CHECK(rr_from_or_at_baseline(8.0 / 3, 0.2) == Approx(2.0).epsilon(1e-12));
  CHECK(rr_from_or_at_baseline(2, 0.6) == Approx(1.25).epsilon(1e-12));
  CHECK(or_from_rr_at_baseline(2.0, 0.2) == Approx(8.0 / 3).epsilon(1e-12));
  for (double p0 : {0.01, 0.3, 0.77}) {
    CHECK(rr_from_or_at_baseline(1, p0) == Approx(1.0).epsilon(1e-15));
    CHECK(or_from_rr_at_baseline(1, p0) == Approx(1.0).epsilon(1e-15));
  }
  CHECK(std::abs(rr_from_or_at_baseline(or_from_rr_at_baseline(1.5, 0.3), 0.3) - 1.5) < 1e-12);

  CHECK_THROWS_AS(rr_from_or_at_baseline(0, 0.3), DomainError);
  CHECK_THROWS_AS(rr_from_or_at_baseline(2, 1.0), DomainError);
  CHECK_THROWS_AS(or_from_rr_at_baseline(2, 0.5), DomainError);
  CHECK_THROWS_AS(or_from_rr_at_baseline(2, 0.6), DomainError);
}

TEST_CASE("conversion round trips on a grid") {
  for (double p0 = 0.05; p0 < 0.96; p0 += 0.05) {
    for (double odds_ratio : {0.1, 0.5, 1.0, 2.0, 7.5}) {
      const double rr = rr_from_or_at_baseline(odds_ratio, p0);
      CHECK(std::abs(or_from_rr_at_baseline(rr, p0) - odds_ratio) < 1e-12 * odds_ratio);
    }
  }
}

TEST_CASE("single-table OR to RR relation is exact") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto t = random_table(rng);
    const double orr = effect(t, EffectKind::OR).point;
    const double rr = effect(t, EffectKind::RR).point;
    const double rd = effect(t, EffectKind::RD).point;
    CHECK(std::abs(rr_from_or_at_baseline(orr, t.baseline_risk()) - rr) < 1e-9 * rr);
    // Same side of the null.
    CHECK((orr > 1) == (rr > 1));
    CHECK((orr > 1) == (rd > 0));
  }
}

TEST_CASE("intervals shrink when cells are scaled up") {
  const TwoByTwoTable t{13, 27, 9, 31};
  for (auto k : kAllEffectKinds) {
    const auto base = effect(t, k);
    const auto big = effect({3 * t.a, 3 * t.b, 3 * t.c, 3 * t.d}, k);
    CHECK(big.point == Approx(base.point).epsilon(1e-12));
    CHECK(big.se_t < base.se_t);
    CHECK(big.ci_high - big.ci_low < base.ci_high - base.ci_low);
  }
}

TEST_CASE("collapsibility on the worked examples") {
  const auto a = collapsibility_report(fixtures::strata(fixtures::Example::A), EffectKind::OR);
  CHECK(a.crude.point == Approx(2.25).epsilon(1e-12));
  REQUIRE(a.strata.size() == 2);
  CHECK(a.strata[0].estimate.point == Approx(8.0 / 3).epsilon(1e-12));
  CHECK(a.strata[1].estimate.point == Approx(8.0 / 3).epsilon(1e-12));
  CHECK_FALSE(a.collapsible);
  REQUIRE(a.attenuation.has_value());
  CHECK(*a.attenuation == Approx(std::log(2.25) - std::log(8.0 / 3)).epsilon(1e-12));
  // Crude OR is strictly closer to the null than the common stratum OR.
  CHECK(a.crude.point > 1);
  CHECK(a.crude.point < a.strata[0].estimate.point);

  const auto b = collapsibility_report(fixtures::strata(fixtures::Example::B), EffectKind::RR);
  CHECK(b.crude.point == Approx(2.0).epsilon(1e-12));
  CHECK(b.strata[0].estimate.point == Approx(2.0).epsilon(1e-12));
  CHECK(b.strata[1].estimate.point == Approx(2.0).epsilon(1e-12));
  CHECK(b.collapsible);
  REQUIRE(b.attenuation.has_value());
  CHECK(std::abs(*b.attenuation) < 1e-12);

  // 1B ORs differ across strata, so no attenuation is defined.
  const auto b_or = collapsibility_report(fixtures::strata(fixtures::Example::B), EffectKind::OR);
  CHECK_FALSE(b_or.collapsible);
  CHECK_FALSE(b_or.attenuation.has_value());
}

TEST_CASE("duplicated strata are collapsible for every measure") {
  const TwoByTwoTable t{17, 23, 11, 29};
  for (auto k : kAllEffectKinds) {
    const auto r = collapsibility_report({{"s1", t}, {"s2", t}}, k);
    CHECK(r.collapsible);
    CHECK(r.crude.point == Approx(r.strata[0].estimate.point).epsilon(1e-12));
  }
  CHECK_THROWS_AS(collapsibility_report({{"only", t}}, EffectKind::OR), DomainError);
}

TEST_CASE("effect kind names") {
  CHECK(parse_effect_kind("or") == EffectKind::OR);
  CHECK(parse_effect_kind("Rr") == EffectKind::RR);
  CHECK(parse_effect_kind("RD") == EffectKind::RD);
  CHECK_THROWS_AS(parse_effect_kind("hr"), DomainError);
  for (auto k : kAllEffectKinds) CHECK(parse_effect_kind(to_string(k)) == k);
}
