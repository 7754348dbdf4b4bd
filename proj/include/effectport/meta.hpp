#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "effectport/tabular.hpp"

namespace effectport {

/// One study's two arms within a meta-analysis.
struct StudyRow {
  std::string meta_id;
  std::string study_id;
  double t_events = 0;
  double t_total = 0;
  double c_events = 0;
  double c_total = 0;

  /// Treatment arm is the exposed row of the table.
  TwoByTwoTable table() const {
    return {t_events, t_total - t_events, c_events, c_total - c_events};
  }
  /// Throws DataValidationError on empty ids, non-positive totals or
  /// events outside [0, total].
  void validate() const;
};

}  // namespace effectport

namespace effectport::meta {

enum class Method { FE, DL, REML };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);

struct StudyEffect {
  double y = 0;  // transformed scale
  double v = 0;  // variance of y
};

struct ReMetaFit {
  EffectKind kind = EffectKind::OR;
  Method method = Method::REML;
  std::vector<StudyEffect> studies;  // input order
  double tau2 = 0;
  double q = 0;
  int k = 0;
  EffectEstimate pooled;
};

/// Per-study (y_i, v_i). `correction` <= 0 disables the zero-cell fix.
std::vector<StudyEffect> study_effects(const std::vector<StudyRow>& studies, EffectKind kind,
                                       double correction = 0.5);

ReMetaFit pool(const std::vector<StudyEffect>& effects, Method method, EffectKind kind,
               double level = 0.95);

ReMetaFit two_stage(const std::vector<StudyRow>& studies, EffectKind kind,
                    Method method = Method::REML, double correction = 0.5,
                    double level = 0.95);

/// Restricted log-likelihood profile in tau2 (constants dropped).
double reml_objective(const std::vector<StudyEffect>& effects, double tau2);

/// Cochran's Q about the fixed-effect mean.
double cochran_q(const std::vector<StudyEffect>& effects);

}  // namespace effectport::meta
