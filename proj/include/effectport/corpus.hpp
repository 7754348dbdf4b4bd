#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "effectport/meta.hpp"
#include "effectport/rankcorr.hpp"

namespace effectport::corpus {

/// Per meta-analysis correlations; a missing value means the correlation
/// was undefined (constant effect or baseline vector).
struct Record {
  std::string meta_id;
  int k = 0;
  std::optional<SpearmanResult> rho_or;
  std::optional<SpearmanResult> rho_rr;
  std::optional<SpearmanResult> rho_rd;

  bool usable() const { return rho_or.has_value() && rho_rr.has_value(); }
};

struct Line {
  double slope = 0;
  double intercept = 0;
};

/// Unweighted least squares of y on x; empty when x has no spread.
std::optional<Line> ols(std::span<const double> x, std::span<const double> y);

struct Summary {
  std::string label;
  int k_min = 0;
  std::optional<int> k_max;  // exclusive upper bound
  int n_meta = 0;            // records in the stratum
  int n_used = 0;            // records with both rho_OR and rho_RR defined
  int n_degenerate = 0;
  double frac_both_negative = 0;
  double frac_or_negligible_rr_not = 0;
  double frac_rr_negligible_or_not = 0;
  std::optional<Line> line;  // rho_RR on rho_OR
  double threshold = 0.3;
};

struct AnalyzeOptions {
  int min_studies = 5;
  double threshold = 0.3;
  int split_at = 20;
  double correction = 0.5;
  double level = 0.95;
};

struct Analysis {
  std::vector<Record> records;     // sorted by meta_id
  std::vector<Summary> summaries;  // non-empty strata, small-k first
  std::vector<std::pair<std::string, int>> skipped;  // below min_studies
};

/// Throws EmptyCorpusError when no meta-analysis reaches min_studies.
Analysis analyze(const std::vector<StudyRow>& studies, const AnalyzeOptions& options = {});

/// Summary for records whose k lies in [k_min, k_max).
Summary summarize(const std::vector<Record>& records, int k_min, std::optional<int> k_max,
                  double threshold);

enum class Mechanism { constant_OR, constant_RR, constant_RD };

std::string_view to_string(Mechanism m);
/// Accepts "constant-or", "constant_or", ... (case-insensitive).
Mechanism parse_mechanism(std::string_view text);

/// Generating process for a synthetic corpus. The constructor rejects
/// combinations that could produce a risk outside (0,1).
class SimMechanism {
 public:
  struct Config {
    Mechanism mechanism = Mechanism::constant_RR;
    double effect = 0.5;
    double p0_min = 0.1;
    double p0_max = 0.9;
    int k_min = 5;
    int k_max = 30;
    int arm_min = 200;
    int arm_max = 1000;
    std::uint64_t seed = 42;
  };

  explicit SimMechanism(const Config& config);

  const Config& config() const { return config_; }
  /// Treatment-arm risk implied by the mechanism at baseline risk p0.
  double treated_risk(double p0) const;

 private:
  Config config_;
};

/// Studies for `n_meta` meta-analyses. Meta-analysis m draws from its own
/// substream of the seed, so output is independent of generation order.
std::vector<StudyRow> simulate(const SimMechanism& mechanism, int n_meta);

}  // namespace effectport::corpus
