#include "effectport/fixtures.hpp"

#include <cmath>

namespace effectport::fixtures {

namespace {

struct Cells {
  double z;
  TwoByTwoTable table;
};

std::vector<Cells> cells(Example e) {
  const TwoByTwoTable z0{40, 60, 20, 80};
  if (e == Example::A) return {{0, z0}, {1, {80, 20, 60, 40}}};
  return {{0, z0}, {1, {60, 40, 30, 70}}};
}

struct Column {
  Example example;
  glm::Link link;
  // X, Z, X:Z | X(Z=0), X(Z=1), Z(X=0), Z(X=1) | crude X, crude Z
  double expected[9];
};

constexpr Column kTable1[] = {
    {Example::B, glm::Link::logit, {2.67, 1.71, 1.31, 2.67, 3.50, 1.71, 2.25, 3.00, 1.91}},
    {Example::B, glm::Link::log, {2.00, 1.50, 1.00, 2.00, 2.00, 1.50, 1.50, 2.00, 1.50}},
    {Example::A, glm::Link::logit, {2.67, 6.00, 1.00, 2.67, 2.67, 6.00, 6.00, 2.25, 5.44}},
    {Example::A, glm::Link::log, {2.00, 3.00, 0.67, 2.00, 1.33, 3.00, 2.00, 1.50, 2.33}},
};

constexpr double kTable1Tolerance = 0.005;

double exp_coef(const glm::Dataset& data, glm::Link link, const char* terms, const char* coef) {
  const auto fit = glm::fit(data, glm::ModelSpec::parse(link, terms));
  return std::exp(fit.coefficient(coef));
}

struct Table2Cell {
  Example example;
  EffectKind kind;
  const char* row;
  double point, low, high;
  double point_tol, bound_tol;
};

// The 1A RR summary is heterogeneous and its published interval is not
// log-symmetric; it is compared loosely.
constexpr Table2Cell kTable2[] = {
    {Example::B, EffectKind::OR, "Z=0", 2.67, 1.42, 5.02, 0.01, 0.01},
    {Example::B, EffectKind::OR, "Z=1", 3.50, 1.95, 6.29, 0.01, 0.01},
    {Example::B, EffectKind::OR, "summary", 3.09, 2.01, 4.74, 0.01, 0.01},
    {Example::B, EffectKind::RR, "Z=0", 2.00, 1.26, 3.17, 0.01, 0.01},
    {Example::B, EffectKind::RR, "Z=1", 2.00, 1.42, 2.81, 0.01, 0.01},
    {Example::B, EffectKind::RR, "summary", 2.00, 1.52, 2.63, 0.01, 0.01},
    {Example::A, EffectKind::OR, "Z=0", 2.67, 1.42, 5.02, 0.01, 0.01},
    {Example::A, EffectKind::OR, "Z=1", 2.67, 1.42, 5.02, 0.01, 0.01},
    {Example::A, EffectKind::OR, "summary", 2.67, 1.70, 4.17, 0.01, 0.01},
    {Example::A, EffectKind::RR, "Z=0", 2.00, 1.26, 3.17, 0.01, 0.01},
    {Example::A, EffectKind::RR, "Z=1", 1.33, 1.11, 1.61, 0.01, 0.01},
    {Example::A, EffectKind::RR, "summary", 1.54, 1.05, 2.06, 0.1, 0.25},
};

}  // namespace

std::string_view name(Example e) { return e == Example::A ? "1A" : "1B"; }

std::vector<std::pair<std::string, TwoByTwoTable>> strata(Example e) {
  std::vector<std::pair<std::string, TwoByTwoTable>> out;
  for (const auto& c : cells(e)) out.emplace_back(c.z == 0 ? "Z=0" : "Z=1", c.table);
  return out;
}

glm::Dataset dataset(Example e) {
  glm::Dataset data({"X", "Z"});
  for (const auto& c : cells(e)) {
    const auto& t = c.table;
    const std::pair<std::vector<double>, std::pair<int, double>> rows[] = {
        {{1, c.z}, {1, t.a}}, {{1, c.z}, {0, t.b}}, {{0, c.z}, {1, t.c}}, {{0, c.z}, {0, t.d}}};
    for (const auto& [x, yn] : rows) {
      for (int i = 0; i < static_cast<int>(yn.second); ++i) data.add_observation(x, yn.first);
    }
  }
  return data;
}

std::vector<StudyRow> studies(Example e) {
  std::vector<StudyRow> out;
  for (const auto& c : cells(e)) {
    const auto& t = c.table;
    out.push_back({std::string(name(e)), c.z == 0 ? "Z=0" : "Z=1", t.a, t.a + t.b, t.c, t.c + t.d});
  }
  return out;
}

bool ReproRow::pass() const { return std::abs(actual - expected) <= tolerance + 1e-12; }

std::vector<ReproRow> reproduce_table1() {
  std::vector<ReproRow> rows;
  for (const auto& col : kTable1) {
    const auto data = dataset(col.example);
    const std::string prefix = std::string(name(col.example)) + " " +
                               (col.link == glm::Link::logit ? "OR (logistic)" : "RR (log-binomial)");
    const double actual[9] = {
        exp_coef(data, col.link, "X,Z,X:Z", "X"),
        exp_coef(data, col.link, "X,Z,X:Z", "Z"),
        exp_coef(data, col.link, "X,Z,X:Z", "X:Z"),
        exp_coef(data.subset("Z", 0), col.link, "X", "X"),
        exp_coef(data.subset("Z", 1), col.link, "X", "X"),
        exp_coef(data.subset("X", 0), col.link, "Z", "Z"),
        exp_coef(data.subset("X", 1), col.link, "Z", "Z"),
        exp_coef(data, col.link, "X", "X"),
        exp_coef(data, col.link, "Z", "Z"),
    };
    const char* labels[9] = {"interaction X",  "interaction Z",  "interaction X:Z",
                             "X (Z=0)",        "X (Z=1)",        "Z (X=0)",
                             "Z (X=1)",        "crude X",        "crude Z"};
    for (int i = 0; i < 9; ++i) {
      rows.push_back({prefix + ": " + labels[i], col.expected[i], actual[i], kTable1Tolerance});
    }
  }
  return rows;
}

std::vector<ReproRow> reproduce_table2() {
  std::vector<ReproRow> rows;
  for (const auto& cell : kTable2) {
    const auto st = studies(cell.example);
    EffectEstimate est;
    if (std::string_view(cell.row) == "summary") {
      est = meta::two_stage(st, cell.kind, meta::Method::REML).pooled;
    } else {
      const auto& s = std::string_view(cell.row) == "Z=0" ? st[0] : st[1];
      est = effect(s.table(), cell.kind);
    }
    const std::string prefix = std::string(name(cell.example)) + " " +
                               std::string(to_string(cell.kind)) + " " + cell.row;
    rows.push_back({prefix + " point", cell.point, est.point, cell.point_tol});
    rows.push_back({prefix + " ci_low", cell.low, est.ci_low, cell.bound_tol});
    rows.push_back({prefix + " ci_high", cell.high, est.ci_high, cell.bound_tol});
  }
  return rows;
}

}  // namespace effectport::fixtures
