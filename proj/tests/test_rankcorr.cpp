#include <doctest.h>

#include <cmath>
#include <random>

#include "effectport/error.hpp"
#include "effectport/rankcorr.hpp"
#include "oracles.hpp"

using namespace effectport;
using doctest::Approx;

namespace {

std::vector<double> draw_with_ties(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> v(0, 6);
  std::vector<double> out(n);
  for (auto& x : out) x = v(rng);
  return out;
}

// Arms of 1024 and even control counts keep every risk and every ratio exact
// in binary floating point, so the RR vector is exactly constant.
std::vector<StudyRow> constant_rr_exact(double rr) {
  std::vector<StudyRow> out;
  for (int i = 0; i < 9; ++i) {
    const double c = 102 + 52 * i;  // baseline risk 0.1 .. 0.5
    out.push_back({"m", "s" + std::to_string(i), rr * c, 1024, c, 1024});
  }
  return out;
}

}  // namespace

TEST_CASE("monotone and antitone") {
  const std::vector<double> x{1, 2, 3};
  CHECK(spearman(x, std::vector<double>{10, 20, 30}) == 1);
  CHECK(spearman(x, std::vector<double>{3, 2, 1}) == -1);
}

TEST_CASE("midranks") {
  const std::vector<double> v{3, 1, 3, 2, 3};
  const auto r = midranks(v);
  CHECK(r == std::vector<double>{4, 1, 4, 2, 4});
  CHECK(r == oracle::midranks(v));
}

TEST_CASE("agrees exactly with the brute-force midrank oracle") {
  std::mt19937_64 rng(20210601);
  std::uniform_int_distribution<int> len(4, 40);
  int compared = 0;
  for (int c = 0; c < 200; ++c) {
    const int n = len(rng);
    const auto x = draw_with_ties(rng, n);
    const auto y = draw_with_ties(rng, n);
    const auto rx = oracle::midranks(x), ry = oracle::midranks(y);
    CHECK(midranks(x) == rx);
    if (rx == std::vector<double>(n, rx[0]) || ry == std::vector<double>(n, ry[0])) {
      CHECK_THROWS_AS(spearman(x, y), DegenerateError);
      continue;
    }
    CHECK(spearman(x, y) == oracle::spearman(x, y));
    ++compared;
  }
  CHECK(compared > 190);
}

TEST_CASE("rank invariances") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0, 1);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(15), y(15);
    for (int i = 0; i < 15; ++i) {
      x[i] = z(rng);
      y[i] = x[i] + z(rng);
    }
    const double rho = spearman(x, y);
    std::vector<double> ex(x), ay(y);
    for (auto& v : ex) v = std::exp(v);
    for (auto& v : ay) v = 3 * v - 7;
    CHECK(spearman(ex, ay) == rho);
    CHECK(spearman(y, x) == rho);
    CHECK(std::abs(rho) <= 1);
  }
}

TEST_CASE("spearman errors") {
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}),
                  LengthMismatchError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1, 1}, std::vector<double>{1, 2, 3, 4}),
                  DegenerateError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, NAN, 3, 4}, std::vector<double>{1, 2, 3, 4}),
                  DomainError);
}

TEST_CASE("Fisher-z interval") {
  const auto [lo, hi] = spearman_interval(0.5, 20, 0.95);
  const double se = std::sqrt((1 + 0.125) / 17);
  CHECK(lo == Approx(std::tanh(std::atanh(0.5) - 1.959963984540054 * se)).epsilon(1e-12));
  CHECK(hi == Approx(std::tanh(std::atanh(0.5) + 1.959963984540054 * se)).epsilon(1e-12));
  for (double rho : {-1.0, -0.99, 0.0, 0.7, 1.0}) {
    const auto [l, h] = spearman_interval(rho, 6, 0.95);
    CHECK(l >= -1);
    CHECK(h <= 1);
    CHECK(l <= rho);
    CHECK(rho <= h);
  }
  const auto [l4, h4] = spearman_interval(0.3, 4, 0.95);
  const auto [l40, h40] = spearman_interval(0.3, 40, 0.95);
  CHECK(h4 - l4 > h40 - l40);
  CHECK_THROWS_AS(spearman_interval(0.3, 3, 0.95), DomainError);
}

TEST_CASE("correlate_meta on exact constant-RR data") {
  const auto studies = constant_rr_exact(1.5);
  const auto r_or = correlate_meta(studies, EffectKind::OR);
  CHECK(r_or.rho > 0.99);  // OR rises with p0 when RR > 1
  CHECK_THROWS_AS(correlate_meta(studies, EffectKind::RR), DegenerateError);

  const auto down = constant_rr_exact(0.5);
  CHECK(correlate_meta(down, EffectKind::OR).rho < -0.99);
}

TEST_CASE("correlate_meta uses control-arm baseline risk") {
  std::vector<StudyRow> s{{"m", "a", 10, 100, 5, 100},
                          {"m", "b", 30, 100, 20, 100},
                          {"m", "c", 12, 100, 40, 100},
                          {"m", "d", 50, 100, 60, 100},
                          {"m", "e", 0, 100, 80, 100}};
  const auto r = correlate_meta(s, EffectKind::RD);
  std::vector<double> x, y;
  for (const auto& st : s) {
    auto t = st.table();
    if (t.has_zero_cell()) t = correct_zero_cells(t);
    x.push_back(t.baseline_risk());
    y.push_back(t.exposed_risk() - t.baseline_risk());
  }
  CHECK(r.rho == oracle::spearman(x, y));
  CHECK(r.n == 5);
  CHECK(r.ci_low <= r.rho);
  CHECK(r.rho <= r.ci_high);

  CHECK_THROWS_AS(correlate_meta({s[0], s[1], s[2]}, EffectKind::OR), InsufficientStudiesError);
}
