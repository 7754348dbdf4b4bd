#include "effectport/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "effectport/error.hpp"
#include "effectport/rng.hpp"

namespace effectport::corpus {

namespace {

std::optional<SpearmanResult> try_correlate(const std::vector<StudyRow>& studies, EffectKind kind,
                                            const AnalyzeOptions& options) {
  try {
    return correlate_meta(studies, kind, options.correction, options.level);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<Line> ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatchError("ols inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) return std::nullopt;
  const double slope = sxy / sxx;
  return Line{slope, my - slope * mx};
}

Summary summarize(const std::vector<Record>& records, int k_min, std::optional<int> k_max,
                  double threshold) {
  Summary s;
  s.k_min = k_min;
  s.k_max = k_max;
  s.threshold = threshold;
  s.label = k_max ? std::to_string(k_min) + "<=k<" + std::to_string(*k_max)
                  : "k>=" + std::to_string(k_min);
  std::vector<double> xs, ys;
  int both_negative = 0, or_only_negligible = 0, rr_only_negligible = 0;
  for (const auto& r : records) {
    if (r.k < k_min || (k_max && r.k >= *k_max)) continue;
    ++s.n_meta;
    if (!r.usable()) {
      ++s.n_degenerate;
      continue;
    }
    const double ro = r.rho_or->rho, rr = r.rho_rr->rho;
    xs.push_back(ro);
    ys.push_back(rr);
    if (ro < 0 && rr < 0) ++both_negative;
    const bool or_negligible = std::abs(ro) < threshold;
    const bool rr_negligible = std::abs(rr) < threshold;
    if (or_negligible && !rr_negligible) ++or_only_negligible;
    if (rr_negligible && !or_negligible) ++rr_only_negligible;
  }
  s.n_used = static_cast<int>(xs.size());
  if (s.n_used > 0) {
    const double n = s.n_used;
    s.frac_both_negative = both_negative / n;
    s.frac_or_negligible_rr_not = or_only_negligible / n;
    s.frac_rr_negligible_or_not = rr_only_negligible / n;
  }
  s.line = ols(xs, ys);
  return s;
}

Analysis analyze(const std::vector<StudyRow>& studies, const AnalyzeOptions& options) {
  std::map<std::string, std::vector<StudyRow>> groups;
  for (const auto& s : studies) {
    s.validate();
    groups[s.meta_id].push_back(s);
  }

  Analysis out;
  for (auto& [meta_id, rows] : groups) {
    const int k = static_cast<int>(rows.size());
    if (k < options.min_studies) {
      out.skipped.emplace_back(meta_id, k);
      continue;
    }
    std::sort(rows.begin(), rows.end(),
              [](const StudyRow& a, const StudyRow& b) { return a.study_id < b.study_id; });
    Record rec;
    rec.meta_id = meta_id;
    rec.k = k;
    rec.rho_or = try_correlate(rows, EffectKind::OR, options);
    rec.rho_rr = try_correlate(rows, EffectKind::RR, options);
    rec.rho_rd = try_correlate(rows, EffectKind::RD, options);
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) {
    throw EmptyCorpusError("no meta-analysis has at least " + std::to_string(options.min_studies) +
                               " studies",
                           out.skipped);
  }

  for (auto stratum : {summarize(out.records, options.min_studies, options.split_at,
                                 options.threshold),
                       summarize(out.records, options.split_at, std::nullopt,
                                 options.threshold)}) {
    if (stratum.n_meta > 0) out.summaries.push_back(std::move(stratum));
  }
  return out;
}

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::constant_OR: return "constant-or";
    case Mechanism::constant_RR: return "constant-rr";
    case Mechanism::constant_RD: return "constant-rd";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view text) {
  std::string s(text);
  for (auto& ch : s) ch = ch == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (s == "constant-or") return Mechanism::constant_OR;
  if (s == "constant-rr") return Mechanism::constant_RR;
  if (s == "constant-rd") return Mechanism::constant_RD;
  throw DomainError("unknown mechanism '" + std::string(text) + "'");
}

SimMechanism::SimMechanism(const Config& config) : config_(config) {
  const auto& c = config_;
  if (!(c.p0_min > 0 && c.p0_max < 1 && c.p0_min <= c.p0_max)) {
    throw InfeasibleMechanismError("baseline range must satisfy 0 < p0_min <= p0_max < 1");
  }
  if (c.k_min < 1 || c.k_max < c.k_min) throw InfeasibleMechanismError("invalid study-count range");
  if (c.arm_min < 1 || c.arm_max < c.arm_min) throw InfeasibleMechanismError("invalid arm-size range");
  switch (c.mechanism) {
    case Mechanism::constant_OR:
      if (!(c.effect > 0)) throw InfeasibleMechanismError("odds ratio must be positive");
      break;
    case Mechanism::constant_RR:
      if (!(c.effect > 0)) throw InfeasibleMechanismError("risk ratio must be positive");
      if (c.effect * c.p0_max >= 1) {
        throw InfeasibleMechanismError("risk ratio times the largest baseline risk reaches 1");
      }
      break;
    case Mechanism::constant_RD:
      if (!(c.p0_min + c.effect > 0 && c.p0_max + c.effect < 1)) {
        throw InfeasibleMechanismError("risk difference pushes a treated risk outside (0,1)");
      }
      break;
  }
}

double SimMechanism::treated_risk(double p0) const {
  const double e = config_.effect;
  switch (config_.mechanism) {
    case Mechanism::constant_OR: return e * p0 / (1 - p0 + e * p0);
    case Mechanism::constant_RR: return e * p0;
    case Mechanism::constant_RD: return p0 + e;
  }
  return p0;
}

std::vector<StudyRow> simulate(const SimMechanism& mechanism, int n_meta) {
  if (n_meta < 1) throw DomainError("need at least one meta-analysis");
  const auto& c = mechanism.config();
  std::vector<StudyRow> out;
  const int width = std::max(5, static_cast<int>(std::to_string(n_meta).size()));
  for (int m = 0; m < n_meta; ++m) {
    auto gen = substream(c.seed, static_cast<std::uint64_t>(m));
    std::uniform_int_distribution<int> k_dist(c.k_min, c.k_max);
    std::uniform_int_distribution<int> arm_dist(c.arm_min, c.arm_max);
    std::uniform_real_distribution<double> p0_dist(c.p0_min, c.p0_max);
    char id[32];
    std::snprintf(id, sizeof id, "MA%0*d", width, m + 1);
    const int k = k_dist(gen);
    for (int s = 0; s < k; ++s) {
      const double p0 = p0_dist(gen);
      const double p1 = mechanism.treated_risk(p0);
      StudyRow row;
      row.meta_id = id;
      row.study_id = "S" + std::to_string(s + 1);
      const int nt = arm_dist(gen);
      const int nc = arm_dist(gen);
      row.t_total = nt;
      row.c_total = nc;
      row.t_events = std::binomial_distribution<int>(nt, p1)(gen);
      row.c_events = std::binomial_distribution<int>(nc, p0)(gen);
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace effectport::corpus
