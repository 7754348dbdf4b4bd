#include "effectport/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "effectport/error.hpp"

namespace effectport::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, int line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw DataValidationError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

double parse_number(const std::string& text, int line_no, const std::string& column) {
  double v = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataValidationError("line " + std::to_string(line_no) + ": column '" + column +
                              "' is not a number: '" + text + "'");
  }
  return v;
}

double parse_count(const std::string& text, int line_no, const std::string& column) {
  const double v = parse_number(text, line_no, column);
  if (v < 0 || v != std::floor(v)) {
    throw DataValidationError("line " + std::to_string(line_no) + ": column '" + column +
                              "' must be a nonnegative integer");
  }
  return v;
}

std::map<std::string, std::size_t> column_index(const CsvTable& t,
                                                const std::vector<std::string>& required) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < t.header.size(); ++i) idx[t.header[i]] = i;
  for (const auto& name : required) {
    if (!idx.count(name)) throw DataValidationError("missing column '" + name + "'");
  }
  return idx;
}

json interval_json(const EffectEstimate& e) {
  switch (e.interval) {
    case IntervalMethod::wald: return "wald";
    case IntervalMethod::bootstrap_percentile: return "bootstrap_percentile";
    case IntervalMethod::none: return nullptr;
  }
  return nullptr;
}

json spearman_or_null(const std::optional<SpearmanResult>& r) {
  return r ? to_json(*r) : json(nullptr);
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') continue;
    auto fields = split_csv_line(line, line_no);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw DataValidationError("line " + std::to_string(line_no) + ": expected " +
                                std::to_string(t.header.size()) + " fields, found " +
                                std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataValidationError("cannot open '" + path.string() + "'");
  return parse_csv(in);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<StudyRow> parse_studies(const CsvTable& table) {
  if (table.header.empty()) throw DataValidationError("no studies");
  const auto idx = column_index(
      table, {"meta_id", "study_id", "t_events", "t_total", "c_events", "c_total"});
  std::vector<StudyRow> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int ln = table.line_numbers[r];
    StudyRow s;
    s.meta_id = row[idx.at("meta_id")];
    s.study_id = row[idx.at("study_id")];
    s.t_events = parse_count(row[idx.at("t_events")], ln, "t_events");
    s.t_total = parse_count(row[idx.at("t_total")], ln, "t_total");
    s.c_events = parse_count(row[idx.at("c_events")], ln, "c_events");
    s.c_total = parse_count(row[idx.at("c_total")], ln, "c_total");
    try {
      s.validate();
    } catch (const DataValidationError& e) {
      throw DataValidationError("line " + std::to_string(ln) + ": " + e.what());
    }
    if (!seen.emplace(s.meta_id, s.study_id).second) {
      throw DataValidationError("line " + std::to_string(ln) + ": duplicate study '" + s.study_id +
                                "' in meta-analysis '" + s.meta_id + "'");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataValidationError("no studies");
  return out;
}

std::vector<StudyRow> read_studies(const std::filesystem::path& path) {
  return parse_studies(read_csv_file(path));
}

void write_studies(std::ostream& out, const std::vector<StudyRow>& studies,
                   const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "meta_id,study_id,t_events,t_total,c_events,c_total\n";
  for (const auto& s : studies) {
    out << csv_escape(s.meta_id) << ',' << csv_escape(s.study_id) << ','
        << format_double(s.t_events) << ',' << format_double(s.t_total) << ','
        << format_double(s.c_events) << ',' << format_double(s.c_total) << '\n';
  }
}

glm::Dataset parse_aggregated(const CsvTable& table) {
  const auto& h = table.header;
  if (h.size() < 4 || h.front() != "pattern_id" || h[h.size() - 2] != "events" ||
      h.back() != "trials") {
    throw DataValidationError(
        "aggregated data needs columns pattern_id,<covariates...>,events,trials");
  }
  std::vector<std::string> names(h.begin() + 1, h.end() - 2);
  glm::Dataset data(names);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int ln = table.line_numbers[r];
    std::vector<double> x;
    for (std::size_t j = 0; j < names.size(); ++j) x.push_back(parse_number(row[j + 1], ln, names[j]));
    const double events = parse_count(row[row.size() - 2], ln, "events");
    const double trials = parse_count(row.back(), ln, "trials");
    if (trials <= 0 || events > trials) {
      throw DataValidationError("line " + std::to_string(ln) + ": need 0 < trials and events <= trials");
    }
    data.add_group(x, events, trials);
  }
  if (data.empty()) throw DataValidationError("no covariate patterns");
  return data;
}

glm::Dataset studies_to_dataset(const std::vector<StudyRow>& studies) {
  if (studies.size() != 2) {
    throw DataValidationError(
        "study input maps to covariates X and Z only for exactly two studies; "
        "use the aggregated pattern format instead");
  }
  glm::Dataset data({"X", "Z"});
  for (std::size_t i = 0; i < 2; ++i) {
    const double z = static_cast<double>(i);
    const auto& s = studies[i];
    data.add_group(std::vector<double>{1.0, z}, s.t_events, s.t_total);
    data.add_group(std::vector<double>{0.0, z}, s.c_events, s.c_total);
  }
  return data;
}

void write_records(std::ostream& out, const std::vector<corpus::Record>& records,
                   const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "meta_id,k";
  for (const char* m : {"or", "rr", "rd"}) {
    out << ",rho_" << m << ',' << m << "_ci_low," << m << "_ci_high";
  }
  out << '\n';
  for (const auto& r : records) {
    out << csv_escape(r.meta_id) << ',' << r.k;
    for (const auto* rho : {&r.rho_or, &r.rho_rr, &r.rho_rd}) {
      if (*rho) {
        out << ',' << format_double((*rho)->rho) << ',' << format_double((*rho)->ci_low) << ','
            << format_double((*rho)->ci_high);
      } else {
        out << ",,,";
      }
    }
    out << '\n';
  }
}

std::vector<corpus::Record> parse_records(const CsvTable& table) {
  const auto idx = column_index(table, {"meta_id", "k", "rho_or", "or_ci_low", "or_ci_high",
                                        "rho_rr", "rr_ci_low", "rr_ci_high", "rho_rd",
                                        "rd_ci_low", "rd_ci_high"});
  std::vector<corpus::Record> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int ln = table.line_numbers[r];
    corpus::Record rec;
    rec.meta_id = row[idx.at("meta_id")];
    rec.k = static_cast<int>(parse_count(row[idx.at("k")], ln, "k"));
    const std::pair<const char*, EffectKind> measures[] = {
        {"or", EffectKind::OR}, {"rr", EffectKind::RR}, {"rd", EffectKind::RD}};
    for (const auto& [m, kind] : measures) {
      const std::string name(m);
      const auto& rho_text = row[idx.at("rho_" + name)];
      if (rho_text.empty()) continue;
      SpearmanResult s;
      s.kind = kind;
      s.n = rec.k;
      s.rho = parse_number(rho_text, ln, "rho_" + name);
      s.ci_low = parse_number(row[idx.at(name + "_ci_low")], ln, name + "_ci_low");
      s.ci_high = parse_number(row[idx.at(name + "_ci_high")], ln, name + "_ci_high");
      (kind == EffectKind::OR ? rec.rho_or : kind == EffectKind::RR ? rec.rho_rr : rec.rho_rd) = s;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataValidationError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw DataValidationError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataValidationError("cannot move output into place at '" + path.string() + "'");
  }
}

json to_json(const EffectEstimate& e) {
  return {{"measure", std::string(to_string(e.kind))},
          {"point", e.point},
          {"se_transformed", e.se_t},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"level", e.level},
          {"interval", interval_json(e)}};
}

json to_json(const glm::GlmFit& fit, double level) {
  json coefs = json::array();
  for (const auto& c : fit.summary(level)) {
    coefs.push_back({{"term", c.name},
                     {"estimate", c.estimate},
                     {"se", c.se},
                     {"exp_estimate", c.exp_estimate},
                     {"exp_ci_low", c.exp_low},
                     {"exp_ci_high", c.exp_high}});
  }
  std::vector<std::string> terms;
  for (const auto& t : fit.spec.terms) terms.push_back(t.name());
  json cov = json::array();
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < fit.covariance.cols(); ++j) row.push_back(fit.covariance(i, j));
    cov.push_back(row);
  }
  return {{"link", std::string(glm::to_string(fit.spec.link))},
          {"terms", terms},
          {"coefficients", coefs},
          {"covariance", cov},
          {"deviance", fit.deviance},
          {"loglik", fit.loglik},
          {"iterations", fit.iterations},
          {"converged", fit.converged},
          {"gradient_max_norm", fit.gradient_max_norm},
          {"level", level}};
}

json to_json(const glm::LrtResult& r) {
  return {{"statistic", r.statistic}, {"df", r.df}, {"p_value", r.p_value}, {"note", r.note}};
}

json to_json(const glm::StandardizedEffects& s) {
  return {{"risk_exposed", s.risk_exposed},
          {"risk_unexposed", s.risk_unexposed},
          {"OR", to_json(s.odds_ratio)},
          {"RR", to_json(s.risk_ratio)},
          {"RD", to_json(s.risk_difference)},
          {"failed_resamples", s.failed_resamples}};
}

json to_json(const meta::ReMetaFit& fit) {
  json studies = json::array();
  for (const auto& s : fit.studies) studies.push_back({{"y", s.y}, {"v", s.v}});
  return {{"measure", std::string(to_string(fit.kind))},
          {"method", std::string(meta::to_string(fit.method))},
          {"k", fit.k},
          {"tau2", fit.tau2},
          {"Q", fit.q},
          {"pooled", to_json(fit.pooled)},
          {"studies", studies}};
}

json to_json(const bglmm::Fit& fit) {
  json cov = nullptr;
  if (fit.covariance) {
    cov = json::array();
    for (int i = 0; i < 5; ++i) {
      json row = json::array();
      for (int j = 0; j < 5; ++j) row.push_back((*fit.covariance)(i, j));
      cov.push_back(row);
    }
  }
  return {{"params",
           {{"mu0", fit.params.mu0},
            {"mu1", fit.params.mu1},
            {"sigma0", fit.params.sigma0},
            {"sigma1", fit.params.sigma1},
            {"rho", fit.params.rho}}},
          {"covariance_unconstrained", cov},
          {"covariance_note", fit.covariance_note},
          {"loglik", fit.loglik},
          {"converged", fit.converged},
          {"boundary", fit.boundary},
          {"quadrature_order", fit.order},
          {"k", fit.k},
          {"iterations", fit.iterations},
          {"gradient_max_norm", fit.gradient_max_norm},
          {"warnings", fit.warnings}};
}

json to_json(const bglmm::ConditionalCurve& curve) {
  json pts = json::array();
  for (const auto& p : curve.points) {
    json pt = {{"p0", p.p0}, {"value", p.value}};
    if (curve.has_bands) {
      pt["compat_low"] = p.compat_low;
      pt["compat_high"] = p.compat_high;
      pt["pred_low"] = p.pred_low;
      pt["pred_high"] = p.pred_high;
    }
    pts.push_back(pt);
  }
  return {{"measure", std::string(to_string(curve.kind))},
          {"level", curve.level},
          {"has_bands", curve.has_bands},
          {"points", pts}};
}

json to_json(const SpearmanResult& r) {
  return {{"measure", std::string(to_string(r.kind))},
          {"rho", r.rho},
          {"n", r.n},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"level", r.level}};
}

json to_json(const corpus::Summary& s) {
  json line = nullptr;
  if (s.line) line = {{"slope", s.line->slope}, {"intercept", s.line->intercept}};
  return {{"stratum", s.label},
          {"k_min", s.k_min},
          {"k_max_exclusive", s.k_max ? json(*s.k_max) : json(nullptr)},
          {"n_meta", s.n_meta},
          {"n_used", s.n_used},
          {"n_degenerate", s.n_degenerate},
          {"frac_both_negative", s.frac_both_negative},
          {"frac_or_negligible_rr_not", s.frac_or_negligible_rr_not},
          {"frac_rr_negligible_or_not", s.frac_rr_negligible_or_not},
          {"ols_rr_on_or", line},
          {"threshold", s.threshold}};
}

json to_json(const corpus::Record& r) {
  return {{"meta_id", r.meta_id},
          {"k", r.k},
          {"rho_or", spearman_or_null(r.rho_or)},
          {"rho_rr", spearman_or_null(r.rho_rr)},
          {"rho_rd", spearman_or_null(r.rho_rd)}};
}

json metadata(const json& config) {
  return {{"schema_version", kSchemaVersion},
          {"tool", kToolName},
          {"version", kToolVersion},
          {"config", config}};
}

}  // namespace effectport::io
