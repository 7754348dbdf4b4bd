#include "effectport/meta.hpp"

#include <algorithm>
#include <cmath>

#include "effectport/error.hpp"

namespace effectport {

void StudyRow::validate() const {
  if (meta_id.empty() || study_id.empty()) {
    throw DataValidationError("study identifiers must be non-empty");
  }
  for (double v : {t_events, t_total, c_events, c_total}) {
    if (!std::isfinite(v) || v < 0) {
      throw DataValidationError("study " + study_id + ": counts must be finite and nonnegative");
    }
  }
  if (t_total <= 0 || c_total <= 0) {
    throw DataValidationError("study " + study_id + ": arm totals must be positive");
  }
  if (t_events > t_total || c_events > c_total) {
    throw DataValidationError("study " + study_id + ": events exceed arm total");
  }
}

}  // namespace effectport

namespace effectport::meta {

namespace {

// Summation order is fixed by sorting, so permuted inputs give identical bits.
std::vector<StudyEffect> canonical(const std::vector<StudyEffect>& effects) {
  auto sorted = effects;
  std::sort(sorted.begin(), sorted.end(), [](const StudyEffect& a, const StudyEffect& b) {
    return a.y != b.y ? a.y < b.y : a.v < b.v;
  });
  return sorted;
}

struct Weighted {
  double mean = 0;
  double sum_w = 0;
};

Weighted weighted_mean(const std::vector<StudyEffect>& effects, double tau2) {
  Weighted out;
  double sum_wy = 0;
  for (const auto& e : effects) {
    const double w = 1 / (e.v + tau2);
    out.sum_w += w;
    sum_wy += w * e.y;
  }
  out.mean = sum_wy / out.sum_w;
  return out;
}

double dersimonian_laird(const std::vector<StudyEffect>& effects) {
  double sw = 0, sw2 = 0;
  for (const auto& e : effects) {
    sw += 1 / e.v;
    sw2 += 1 / (e.v * e.v);
  }
  const double c = sw - sw2 / sw;
  const double k = static_cast<double>(effects.size());
  return std::max(0.0, (cochran_q(effects) - (k - 1)) / c);
}

double reml_tau2(const std::vector<StudyEffect>& effects) {
  const double ybar = [&] {
    double s = 0;
    for (const auto& e : effects) s += e.y;
    return s / static_cast<double>(effects.size());
  }();
  double upper = 0;
  for (const auto& e : effects) {
    upper = std::max(upper, e.v + (e.y - ybar) * (e.y - ybar));
  }
  upper *= 10;

  // Golden-section maximization on [0, upper].
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  double lo = 0, hi = upper;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = reml_objective(effects, x1);
  double f2 = reml_objective(effects, x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = reml_objective(effects, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = reml_objective(effects, x1);
    }
  }
  double best = (lo + hi) / 2;
  double best_f = reml_objective(effects, best);
  for (double edge : {0.0, upper}) {
    const double f = reml_objective(effects, edge);
    if (f >= best_f) {
      best = edge;
      best_f = f;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::FE: return "FE";
    case Method::DL: return "DL";
    case Method::REML: return "REML";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "fe" || text == "FE") return Method::FE;
  if (text == "dl" || text == "DL") return Method::DL;
  if (text == "reml" || text == "REML") return Method::REML;
  throw DomainError("unknown pooling method '" + std::string(text) + "'");
}

std::vector<StudyEffect> study_effects(const std::vector<StudyRow>& studies, EffectKind kind,
                                       double correction) {
  std::vector<StudyEffect> out;
  out.reserve(studies.size());
  for (const auto& s : studies) {
    s.validate();
    auto table = s.table();
    if (correction > 0) table = correct_zero_cells(table, correction);
    const auto e = effect(table, kind);
    out.push_back({to_transformed(kind, e.point), e.se_t * e.se_t});
  }
  return out;
}

double reml_objective(const std::vector<StudyEffect>& effects, double tau2) {
  const auto wm = weighted_mean(effects, tau2);
  double log_det = 0, rss = 0;
  for (const auto& e : effects) {
    const double total = e.v + tau2;
    log_det += std::log(total);
    rss += (e.y - wm.mean) * (e.y - wm.mean) / total;
  }
  return -0.5 * log_det - 0.5 * std::log(wm.sum_w) - 0.5 * rss;
}

double cochran_q(const std::vector<StudyEffect>& effects) {
  const auto wm = weighted_mean(effects, 0.0);
  double q = 0;
  for (const auto& e : effects) q += (e.y - wm.mean) * (e.y - wm.mean) / e.v;
  return q;
}

ReMetaFit pool(const std::vector<StudyEffect>& effects, Method method, EffectKind kind,
               double level) {
  if (effects.size() < 2) {
    throw InsufficientStudiesError("pooling needs at least two studies");
  }
  for (const auto& e : effects) {
    if (!(e.v > 0) || !std::isfinite(e.y)) {
      throw DomainError("study variances must be positive and estimates finite");
    }
  }
  const auto sorted = canonical(effects);

  ReMetaFit fit;
  fit.kind = kind;
  fit.method = method;
  fit.studies = effects;
  fit.k = static_cast<int>(effects.size());
  fit.q = cochran_q(sorted);
  switch (method) {
    case Method::FE: fit.tau2 = 0; break;
    case Method::DL: fit.tau2 = dersimonian_laird(sorted); break;
    case Method::REML: fit.tau2 = reml_tau2(sorted); break;
  }
  const auto wm = weighted_mean(sorted, fit.tau2);
  fit.pooled = wald_estimate(kind, wm.mean, 1 / std::sqrt(wm.sum_w), level);
  return fit;
}

ReMetaFit two_stage(const std::vector<StudyRow>& studies, EffectKind kind, Method method,
                    double correction, double level) {
  return pool(study_effects(studies, kind, correction), method, kind, level);
}

}  // namespace effectport::meta
