#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "effectport/bglmm.hpp"
#include "effectport/corpus.hpp"
#include "effectport/glm.hpp"
#include "effectport/meta.hpp"
#include "effectport/rankcorr.hpp"
#include "effectport/tabular.hpp"

namespace effectport::io {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolName = "effectport";
inline constexpr const char* kToolVersion = "1.0.0";

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row
};

/// RFC 4180-style fields (double quotes escape commas and quotes). Blank
/// lines and lines starting with '#' are skipped.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

std::string csv_escape(const std::string& field);
/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// `meta_id,study_id,t_events,t_total,c_events,c_total`. Raw counts must be
/// integral; (meta_id, study_id) pairs must be unique.
std::vector<StudyRow> parse_studies(const CsvTable& table);
std::vector<StudyRow> read_studies(const std::filesystem::path& path);
void write_studies(std::ostream& out, const std::vector<StudyRow>& studies,
                   const std::string& comment = {});

/// `pattern_id,<covariates...>,events,trials`.
glm::Dataset parse_aggregated(const CsvTable& table);
/// Study rows expanded to covariates X (1 = treatment arm) and Z (0 for the
/// first study, 1 for the second). Exactly two studies are required.
glm::Dataset studies_to_dataset(const std::vector<StudyRow>& studies);

void write_records(std::ostream& out, const std::vector<corpus::Record>& records,
                   const std::string& comment = {});
std::vector<corpus::Record> parse_records(const CsvTable& table);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

using nlohmann::json;

json to_json(const EffectEstimate& e);
json to_json(const glm::GlmFit& fit, double level);
json to_json(const glm::LrtResult& r);
json to_json(const glm::StandardizedEffects& s);
json to_json(const meta::ReMetaFit& fit);
json to_json(const bglmm::Fit& fit);
json to_json(const bglmm::ConditionalCurve& curve);
json to_json(const SpearmanResult& r);
json to_json(const corpus::Summary& s);
/// Degenerate correlations are null.
json to_json(const corpus::Record& r);

/// {"schema_version", "tool", "version", "config"} header block.
json metadata(const json& config);

}  // namespace effectport::io
