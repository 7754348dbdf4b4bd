#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace effectport {

/// Cell counts of one exposed/unexposed by event/non-event table.
///
///            event   no event
///   exposed    a        b
///   unexposed  c        d
///
/// Cells are reals so the +0.5 correction and weighted pooling compose.
struct TwoByTwoTable {
  double a = 0;
  double b = 0;
  double c = 0;
  double d = 0;

  double exposed_total() const { return a + b; }
  double unexposed_total() const { return c + d; }
  double exposed_risk() const { return a / (a + b); }
  /// Control-arm observed risk c/(c+d).
  double baseline_risk() const { return c / (c + d); }

  bool has_zero_cell() const { return a == 0 || b == 0 || c == 0 || d == 0; }

  /// Throws DomainError on a negative or non-finite cell.
  void validate() const;

  TwoByTwoTable operator+(const TwoByTwoTable& o) const {
    return {a + o.a, b + o.b, c + o.c, d + o.d};
  }
  bool operator==(const TwoByTwoTable&) const = default;
};

enum class EffectKind { OR, RR, RD };

inline constexpr EffectKind kAllEffectKinds[] = {EffectKind::OR, EffectKind::RR,
                                                 EffectKind::RD};

std::string_view to_string(EffectKind kind);
/// Accepts "or", "rr", "rd" in any case.
EffectKind parse_effect_kind(std::string_view text);

/// Ratio measures are analysed on the log scale, RD on the identity scale.
inline bool is_ratio(EffectKind kind) { return kind != EffectKind::RD; }
double to_transformed(EffectKind kind, double point);
double from_transformed(EffectKind kind, double value);

enum class IntervalMethod { wald, bootstrap_percentile, none };

struct EffectEstimate {
  EffectKind kind = EffectKind::OR;
  double point = 0;
  double se_t = 0;  // transformed-scale standard error
  double ci_low = 0;
  double ci_high = 0;
  double level = 0.95;
  IntervalMethod interval = IntervalMethod::wald;
};

/// Wald estimate from a transformed-scale point and standard error.
EffectEstimate wald_estimate(EffectKind kind, double transformed_point,
                             double se_t, double level);

/// Measure computed from a pair of risks (treated, control).
double measure_from_risks(EffectKind kind, double p1, double p0);

/// Adds `increment` to all cells when any cell is zero.
TwoByTwoTable correct_zero_cells(const TwoByTwoTable& t, double increment = 0.5);

EffectEstimate effect(const TwoByTwoTable& t, EffectKind kind,
                      double level = 0.95);

/// Single-stratum OR to RR conversion at baseline risk p0.
double rr_from_or_at_baseline(double odds_ratio, double p0);
double or_from_rr_at_baseline(double risk_ratio, double p0);

struct StratumEstimate {
  std::string label;
  EffectEstimate estimate;
};

struct CollapsibilityReport {
  EffectKind kind = EffectKind::OR;
  EffectEstimate crude;
  std::vector<StratumEstimate> strata;
  bool collapsible = false;
  /// crude minus the common stratum value on the transformed scale; only
  /// set when the strata agree with each other.
  std::optional<double> attenuation;
};

inline constexpr double kCollapsibilityTolerance = 1e-6;

CollapsibilityReport collapsibility_report(
    const std::vector<std::pair<std::string, TwoByTwoTable>>& strata,
    EffectKind kind, double level = 0.95);

}  // namespace effectport
