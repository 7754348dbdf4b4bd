#pragma once

#include <string>
#include <utility>
#include <vector>

#include "effectport/glm.hpp"
#include "effectport/meta.hpp"
#include "effectport/tabular.hpp"

// Two-stratum example datasets (exposure X, stratum Z, outcome Y) and the
// published effect estimates derived from them.
namespace effectport::fixtures {

enum class Example { A, B };

std::string_view name(Example e);

/// Stratum tables ordered (Z=0, Z=1).
std::vector<std::pair<std::string, TwoByTwoTable>> strata(Example e);

/// Row-expanded data with covariates X and Z.
glm::Dataset dataset(Example e);

/// The strata as two independent studies, Z=0 first.
std::vector<StudyRow> studies(Example e);

struct ReproRow {
  std::string label;
  double expected = 0;
  double actual = 0;
  double tolerance = 0;

  bool pass() const;
};

/// Every exponentiated coefficient of the GLM comparison table: interaction
/// models, stratified models and crude models, for logit and log links on
/// both examples.
std::vector<ReproRow> reproduce_table1();

/// Per-stratum and REML-pooled OR/RR with 95% intervals for both examples.
std::vector<ReproRow> reproduce_table2();

}  // namespace effectport::fixtures
