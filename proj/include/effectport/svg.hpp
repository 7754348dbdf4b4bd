#pragma once

#include <string>
#include <utility>
#include <vector>

#include "effectport/bglmm.hpp"
#include "effectport/corpus.hpp"
#include "effectport/meta.hpp"

namespace effectport::svg {

struct ForestPanel {
  std::string title;
  std::vector<std::string> labels;  // one per study, in fit order
  meta::ReMetaFit fit;
};

/// Study estimates with intervals and a pooled diamond, one panel per fit.
std::string forest_plot(const std::vector<ForestPanel>& panels);

struct CurvePanel {
  bglmm::ConditionalCurve curve;
  std::vector<std::pair<double, double>> observed;  // (baseline risk, study effect)
};

/// Side-by-side panels of effect against baseline risk with prediction and
/// compatibility bands.
std::string curve_plot(const std::vector<CurvePanel>& panels, const std::string& title);

/// rho_RR against rho_OR per stratum with the diagonal and the OLS line.
std::string scatter_plot(const std::vector<corpus::Record>& records,
                         const std::vector<corpus::Summary>& summaries);

}  // namespace effectport::svg
