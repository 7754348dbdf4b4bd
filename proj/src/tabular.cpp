#include "effectport/tabular.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "effectport/error.hpp"
#include "effectport/stats.hpp"

namespace effectport {

namespace {

bool relatively_equal(double x, double y, double tol) {
  return std::abs(x - y) <= tol * std::max({std::abs(x), std::abs(y), 1e-300});
}

}  // namespace

void TwoByTwoTable::validate() const {
  for (double v : {a, b, c, d}) {
    if (!std::isfinite(v) || v < 0) {
      throw DomainError("2x2 table cells must be finite and nonnegative");
    }
  }
}

std::string_view to_string(EffectKind kind) {
  switch (kind) {
    case EffectKind::OR: return "OR";
    case EffectKind::RR: return "RR";
    case EffectKind::RD: return "RD";
  }
  return "?";
}

EffectKind parse_effect_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "or") return EffectKind::OR;
  if (lower == "rr") return EffectKind::RR;
  if (lower == "rd") return EffectKind::RD;
  throw DomainError("unknown effect measure '" + std::string(text) + "'");
}

double to_transformed(EffectKind kind, double point) {
  return is_ratio(kind) ? std::log(point) : point;
}

double from_transformed(EffectKind kind, double value) {
  return is_ratio(kind) ? std::exp(value) : value;
}

EffectEstimate wald_estimate(EffectKind kind, double transformed_point,
                             double se_t, double level) {
  const double z = normal_critical(level);
  EffectEstimate e;
  e.kind = kind;
  e.level = level;
  e.se_t = se_t;
  e.point = from_transformed(kind, transformed_point);
  e.ci_low = from_transformed(kind, transformed_point - z * se_t);
  e.ci_high = from_transformed(kind, transformed_point + z * se_t);
  e.interval = IntervalMethod::wald;
  return e;
}

double measure_from_risks(EffectKind kind, double p1, double p0) {
  switch (kind) {
    case EffectKind::OR: return (p1 / (1 - p1)) / (p0 / (1 - p0));
    case EffectKind::RR: return p1 / p0;
    case EffectKind::RD: return p1 - p0;
  }
  return 0;
}

TwoByTwoTable correct_zero_cells(const TwoByTwoTable& t, double increment) {
  if (!(increment > 0)) throw DomainError("correction increment must be > 0");
  if (!t.has_zero_cell()) return t;
  return {t.a + increment, t.b + increment, t.c + increment, t.d + increment};
}

EffectEstimate effect(const TwoByTwoTable& t, EffectKind kind, double level) {
  t.validate();
  if (t.a + t.b <= 0 || t.c + t.d <= 0 || t.a + t.c <= 0 || t.b + t.d <= 0) {
    throw DegenerateMarginError("2x2 table has an empty margin");
  }
  const double n1 = t.a + t.b;
  const double n0 = t.c + t.d;
  switch (kind) {
    case EffectKind::OR: {
      if (t.has_zero_cell()) {
        throw ZeroCellError("odds ratio needs all cells > 0; apply a zero-cell correction");
      }
      const double log_or = std::log(t.a) + std::log(t.d) - std::log(t.b) - std::log(t.c);
      const double se = std::sqrt(1 / t.a + 1 / t.b + 1 / t.c + 1 / t.d);
      auto e = wald_estimate(kind, log_or, se, level);
      e.point = (t.a * t.d) / (t.b * t.c);
      return e;
    }
    case EffectKind::RR: {
      if (t.a == 0 || t.c == 0) {
        throw ZeroCellError("risk ratio needs a > 0 and c > 0; apply a zero-cell correction");
      }
      const double rr = (t.a / n1) / (t.c / n0);
      const double se = std::sqrt(1 / t.a - 1 / n1 + 1 / t.c - 1 / n0);
      auto e = wald_estimate(kind, std::log(rr), se, level);
      e.point = rr;
      return e;
    }
    case EffectKind::RD: {
      const double p1 = t.a / n1;
      const double p0 = t.c / n0;
      const double se = std::sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0);
      return wald_estimate(kind, p1 - p0, se, level);
    }
  }
  throw DomainError("unknown effect kind");
}

double rr_from_or_at_baseline(double odds_ratio, double p0) {
  if (!(odds_ratio > 0) || !std::isfinite(odds_ratio)) {
    throw DomainError("odds ratio must be positive");
  }
  if (!(p0 > 0 && p0 < 1)) throw DomainError("baseline risk must lie in (0,1)");
  return odds_ratio / (1 - p0 + p0 * odds_ratio);
}

double or_from_rr_at_baseline(double risk_ratio, double p0) {
  if (!(risk_ratio > 0) || !std::isfinite(risk_ratio)) {
    throw DomainError("risk ratio must be positive");
  }
  if (!(p0 > 0 && p0 < 1)) throw DomainError("baseline risk must lie in (0,1)");
  const double p1 = risk_ratio * p0;
  if (p1 >= 1) throw DomainError("risk ratio times baseline risk must be < 1");
  return (p1 / (1 - p1)) / (p0 / (1 - p0));
}

CollapsibilityReport collapsibility_report(
    const std::vector<std::pair<std::string, TwoByTwoTable>>& strata,
    EffectKind kind, double level) {
  if (strata.size() < 2) throw DomainError("collapsibility needs at least two strata");

  CollapsibilityReport report;
  report.kind = kind;
  TwoByTwoTable pooled;
  for (const auto& [label, table] : strata) {
    report.strata.push_back({label, effect(table, kind, level)});
    pooled = pooled + table;
  }
  report.crude = effect(pooled, kind, level);

  const double common = report.strata.front().estimate.point;
  const bool homogeneous = std::all_of(
      report.strata.begin(), report.strata.end(), [&](const StratumEstimate& s) {
        return relatively_equal(s.estimate.point, common, kCollapsibilityTolerance);
      });
  report.collapsible =
      homogeneous &&
      relatively_equal(report.crude.point, common, kCollapsibilityTolerance);
  if (homogeneous) {
    report.attenuation =
        to_transformed(kind, report.crude.point) - to_transformed(kind, common);
  }
  return report;
}

}  // namespace effectport
