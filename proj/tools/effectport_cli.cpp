#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "effectport/bglmm.hpp"
#include "effectport/corpus.hpp"
#include "effectport/error.hpp"
#include "effectport/fixtures.hpp"
#include "effectport/glm.hpp"
#include "effectport/io.hpp"
#include "effectport/meta.hpp"
#include "effectport/rankcorr.hpp"
#include "effectport/svg.hpp"
#include "effectport/tabular.hpp"

namespace fs = std::filesystem;
using effectport::io::json;
namespace ep = effectport;

namespace {

constexpr int kExitMismatch = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void report_error(const std::string& name, const std::string& cls, const std::string& message,
                  int code, json extra = json::object()) {
  json j{{"error", name}, {"class", cls}, {"message", message}, {"exit_code", code}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::cerr << j.dump() << "\n";
}

// Output directory must exist before any computation starts.
const CLI::Validator kWritablePath(
    [](std::string& p) -> std::string {
      const auto parent = fs::absolute(fs::path(p)).parent_path();
      if (!fs::is_directory(parent)) return "directory does not exist: " + parent.string();
      if (fs::is_directory(p)) return "output path is a directory: " + p;
      return {};
    },
    "WRITABLE", "writable path");

struct Common {
  std::string input;
  std::string output;
  std::string format = "json";
  std::string plot;
  double level = 0.95;
  double correction = 0.5;
};

void add_input(CLI::App* app, Common& c) {
  app->add_option("input", c.input, "Study CSV (meta_id,study_id,t_events,t_total,c_events,c_total)")
      ->required()
      ->check(CLI::ExistingFile);
}

void add_output(CLI::App* app, Common& c) {
  app->add_option("-o,--output", c.output, "Output file (default: stdout)")->check(kWritablePath);
  app->add_option("--format", c.format, "Output format")
      ->transform(CLI::IsMember({"json", "csv"}, CLI::ignore_case));
}

void add_level(CLI::App* app, Common& c) {
  app->add_option("--level", c.level, "Interval level")
      ->check([](const std::string& s) {
        const double v = std::stod(s);
        return (v > 0 && v < 1) ? std::string{} : std::string("level must lie strictly in (0,1)");
      });
}

void add_correction(CLI::App* app, Common& c) {
  app->add_option("--correction", c.correction,
                  "Zero-cell increment added to all cells of a table with a zero (<= 0 disables)");
}

void add_plot(CLI::App* app, Common& c) {
  app->add_option("--plot", c.plot, "SVG plot path")->check(kWritablePath);
}

const std::vector<std::string> kMeasureNames{"or", "rr", "rd"};

std::vector<ep::EffectKind> parse_measures(const std::vector<std::string>& names) {
  std::vector<ep::EffectKind> out;
  for (const auto& n : names) {
    const auto k = ep::parse_effect_kind(n);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

json measure_names_json(const std::vector<ep::EffectKind>& kinds) {
  json j = json::array();
  for (auto k : kinds) j.push_back(std::string(ep::to_string(k)));
  return j;
}

void emit(const std::string& content, const std::string& path) {
  if (path.empty()) {
    std::cout << content;
    std::cout.flush();
  } else {
    ep::io::write_atomic(path, content);
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string csv_comment(const std::string& command, const json& config) {
  return std::string(ep::io::kToolName) + " " + ep::io::kToolVersion + " " + command + " " +
         config.dump();
}

std::map<std::string, std::vector<ep::StudyRow>> group_by_meta(
    const std::vector<ep::StudyRow>& studies) {
  std::map<std::string, std::vector<ep::StudyRow>> groups;
  for (const auto& s : studies) groups[s.meta_id].push_back(s);
  return groups;
}

ep::TwoByTwoTable corrected(const ep::TwoByTwoTable& t, double correction) {
  return correction > 0 ? ep::correct_zero_cells(t, correction) : t;
}

// --- measures ---------------------------------------------------------------

struct MeasuresArgs {
  Common c;
  std::vector<std::string> measures = kMeasureNames;
};

int run_measures(const MeasuresArgs& a) {
  const auto studies = ep::io::read_studies(a.c.input);
  const auto kinds = parse_measures(a.measures);
  const json config{{"command", "measures"},    {"input", a.c.input},
                    {"measures", measure_names_json(kinds)}, {"correction", a.c.correction},
                    {"level", a.c.level}};

  if (a.c.format == "csv") {
    std::ostringstream out;
    out << "# " << csv_comment("measures", config) << "\n";
    out << "meta_id,study_id,measure,point,se_t,ci_low,ci_high,level\n";
    for (const auto& s : studies) {
      const auto t = corrected(s.table(), a.c.correction);
      for (auto k : kinds) {
        const auto e = ep::effect(t, k, a.c.level);
        out << ep::io::csv_escape(s.meta_id) << ',' << ep::io::csv_escape(s.study_id) << ','
            << ep::to_string(k) << ',' << ep::io::format_double(e.point) << ','
            << ep::io::format_double(e.se_t) << ',' << ep::io::format_double(e.ci_low) << ','
            << ep::io::format_double(e.ci_high) << ',' << ep::io::format_double(e.level) << "\n";
      }
    }
    emit(out.str(), a.c.output);
    return 0;
  }

  json rows = json::array();
  for (const auto& s : studies) {
    const auto t = corrected(s.table(), a.c.correction);
    json est = json::object();
    for (auto k : kinds) est[std::string(ep::to_string(k))] = ep::io::to_json(ep::effect(t, k, a.c.level));
    rows.push_back({{"meta_id", s.meta_id},
                    {"study_id", s.study_id},
                    {"corrected", t != s.table()},
                    {"baseline_risk", t.baseline_risk()},
                    {"estimates", est}});
  }
  emit(dump({{"metadata", ep::io::metadata(config)}, {"studies", rows}}), a.c.output);
  return 0;
}

// --- glm --------------------------------------------------------------------

struct GlmArgs {
  Common c;
  std::string link = "logit";
  std::string terms = "X,Z,X:Z";
  std::string reduced;
  std::string exposure;
  int resamples = 2000;
  std::uint64_t seed = 20210601;
};

ep::glm::Dataset read_dataset(const std::string& path) {
  const auto table = ep::io::read_csv_file(path);
  if (!table.header.empty() && table.header.front() == "pattern_id") {
    return ep::io::parse_aggregated(table);
  }
  return ep::io::studies_to_dataset(ep::io::parse_studies(table));
}

int run_glm(const GlmArgs& a) {
  const auto data = read_dataset(a.c.input);
  const auto link = ep::glm::parse_link(a.link);
  const auto spec = ep::glm::ModelSpec::parse(link, a.terms);
  json config{{"command", "glm"}, {"input", a.c.input}, {"link", a.link},
              {"terms", a.terms}, {"level", a.c.level}};
  if (!a.reduced.empty()) config["reduced"] = a.reduced;
  if (!a.exposure.empty()) {
    config["exposure"] = a.exposure;
    config["resamples"] = a.resamples;
    config["seed"] = a.seed;
  }

  const auto fit = ep::glm::fit(data, spec);
  json j{{"metadata", ep::io::metadata(config)}, {"fit", ep::io::to_json(fit, a.c.level)}};
  if (!a.reduced.empty()) {
    const auto reduced = ep::glm::fit(data, ep::glm::ModelSpec::parse(link, a.reduced));
    j["reduced_fit"] = ep::io::to_json(reduced, a.c.level);
    j["lrt"] = ep::io::to_json(ep::glm::lrt(fit, reduced));
  }
  if (!a.exposure.empty()) {
    ep::glm::StandardizeOptions opts;
    opts.resamples = a.resamples;
    opts.seed = a.seed;
    opts.level = a.c.level;
    j["standardized"] = ep::io::to_json(ep::glm::standardize(fit, data, a.exposure, opts));
  }

  if (a.c.format == "csv") {
    std::ostringstream out;
    out << "# " << csv_comment("glm", config) << "\n";
    out << "term,estimate,se,exp_estimate,exp_ci_low,exp_ci_high\n";
    for (const auto& s : fit.summary(a.c.level)) {
      out << ep::io::csv_escape(s.name) << ',' << ep::io::format_double(s.estimate) << ','
          << ep::io::format_double(s.se) << ',' << ep::io::format_double(s.exp_estimate) << ','
          << ep::io::format_double(s.exp_low) << ',' << ep::io::format_double(s.exp_high)
          << "\n";
    }
    emit(out.str(), a.c.output);
    return 0;
  }
  emit(dump(j), a.c.output);
  return 0;
}

// --- meta -------------------------------------------------------------------

struct MetaArgs {
  Common c;
  std::string measure = "or";
  std::string method = "reml";
};

int run_meta(const MetaArgs& a) {
  const auto studies = ep::io::read_studies(a.c.input);
  const auto kind = ep::parse_effect_kind(a.measure);
  const auto method = ep::meta::parse_method(a.method);
  const json config{{"command", "meta"},         {"input", a.c.input},
                    {"measure", a.measure},       {"method", a.method},
                    {"correction", a.c.correction}, {"level", a.c.level}};

  std::vector<ep::svg::ForestPanel> panels;
  json fits = json::array();
  std::ostringstream csv;
  csv << "# " << csv_comment("meta", config) << "\n";
  csv << "meta_id,measure,method,k,tau2,q,point,ci_low,ci_high,level\n";
  for (const auto& [id, group] : group_by_meta(studies)) {
    const auto fit = ep::meta::two_stage(group, kind, method, a.c.correction, a.c.level);
    json f = ep::io::to_json(fit);
    json ids = json::array();
    std::vector<std::string> labels;
    for (const auto& s : group) {
      ids.push_back(s.study_id);
      labels.push_back(s.study_id);
    }
    fits.push_back({{"meta_id", id}, {"study_ids", ids}, {"fit", f}});
    panels.push_back({id, labels, fit});
    const auto& p = fit.pooled;
    csv << ep::io::csv_escape(id) << ',' << ep::to_string(kind) << ','
        << ep::meta::to_string(method) << ',' << fit.k << ',' << ep::io::format_double(fit.tau2)
        << ',' << ep::io::format_double(fit.q) << ',' << ep::io::format_double(p.point) << ','
        << ep::io::format_double(p.ci_low) << ',' << ep::io::format_double(p.ci_high) << ','
        << ep::io::format_double(p.level) << "\n";
  }
  emit(a.c.format == "csv" ? csv.str() : dump({{"metadata", ep::io::metadata(config)}, {"fits", fits}}),
       a.c.output);
  if (!a.c.plot.empty()) ep::io::write_atomic(a.c.plot, ep::svg::forest_plot(panels));
  return 0;
}

// --- bglmm ------------------------------------------------------------------

struct BglmmArgs {
  Common c;
  std::string meta_id;
  int quadrature = 20;
  int grid_points = 41;
  int draws = 4000;
  std::uint64_t seed = 20210601;
  bool plug_in = false;
};

int run_bglmm(const BglmmArgs& a) {
  const auto all = ep::io::read_studies(a.c.input);
  const auto groups = group_by_meta(all);
  std::vector<ep::StudyRow> studies;
  if (!a.meta_id.empty()) {
    const auto it = groups.find(a.meta_id);
    if (it == groups.end()) throw ep::DataValidationError("no meta-analysis '" + a.meta_id + "'");
    studies = it->second;
  } else if (groups.size() == 1) {
    studies = all;
  } else {
    throw UsageError("input holds " + std::to_string(groups.size()) +
                     " meta-analyses; select one with --meta-id");
  }

  const json config{{"command", "bglmm"},       {"input", a.c.input},
                    {"meta_id", studies.front().meta_id}, {"quadrature", a.quadrature},
                    {"level", a.c.level},         {"grid_points", a.grid_points},
                    {"draws", a.draws},           {"seed", a.seed},
                    {"plug_in", a.plug_in},       {"correction", a.c.correction}};

  ep::bglmm::FitOptions fo;
  fo.order = a.quadrature;
  const auto fit = ep::bglmm::fit(studies, fo);

  double lo = 1, hi = 0;
  for (const auto& s : studies) {
    const double p0 = corrected(s.table(), a.c.correction).baseline_risk();
    lo = std::min(lo, p0);
    hi = std::max(hi, p0);
  }
  lo = std::clamp(lo, 0.005, 0.995);
  hi = std::clamp(hi, 0.005, 0.995);
  if (hi <= lo) hi = std::min(0.995, lo + 0.01);
  const auto grid = ep::bglmm::linear_grid(lo, hi, a.grid_points);

  ep::bglmm::CurveOptions co;
  co.level = a.c.level;
  co.draws = a.draws;
  co.seed = a.seed;
  co.plug_in = a.plug_in;

  json marginals = json::object();
  json curves = json::object();
  std::vector<ep::svg::CurvePanel> panels;
  for (auto kind : ep::kAllEffectKinds) {
    const std::string key(ep::to_string(kind));
    marginals[key] = ep::io::to_json(ep::bglmm::marginal(fit, kind, a.c.level));
    auto curve = ep::bglmm::conditional_curve(fit, kind, grid, co);
    curves[key] = ep::io::to_json(curve);
    ep::svg::CurvePanel panel{std::move(curve), {}};
    for (const auto& s : studies) {
      const auto t = corrected(s.table(), a.c.correction);
      if (t.has_zero_cell()) continue;
      panel.observed.emplace_back(t.baseline_risk(), ep::effect(t, kind, a.c.level).point);
    }
    panels.push_back(std::move(panel));
  }

  const json j{{"metadata", ep::io::metadata(config)},
               {"fit", ep::io::to_json(fit)},
               {"marginal", marginals},
               {"conditional", curves}};
  if (a.c.format == "csv") {
    std::ostringstream out;
    out << "# " << csv_comment("bglmm", config) << "\n";
    out << "measure,p0,value,compat_low,compat_high,pred_low,pred_high\n";
    for (const auto& panel : panels) {
      for (const auto& p : panel.curve.points) {
        out << ep::to_string(panel.curve.kind) << ',' << ep::io::format_double(p.p0) << ','
            << ep::io::format_double(p.value) << ',' << ep::io::format_double(p.compat_low) << ','
            << ep::io::format_double(p.compat_high) << ',' << ep::io::format_double(p.pred_low)
            << ',' << ep::io::format_double(p.pred_high) << "\n";
      }
    }
    emit(out.str(), a.c.output);
  } else {
    emit(dump(j), a.c.output);
  }
  if (!a.c.plot.empty()) {
    ep::io::write_atomic(a.c.plot,
                         ep::svg::curve_plot(panels, "Effect against baseline risk: " +
                                                         studies.front().meta_id));
  }
  return 0;
}

// --- corr -------------------------------------------------------------------

struct CorrArgs {
  Common c;
  std::vector<std::string> measures = kMeasureNames;
};

std::optional<ep::SpearmanResult> try_correlate(const std::vector<ep::StudyRow>& group,
                                                ep::EffectKind kind, double correction,
                                                double level) {
  try {
    return ep::correlate_meta(group, kind, correction, level);
  } catch (const ep::DegenerateError&) {
    return std::nullopt;
  }
}

int run_corr(const CorrArgs& a) {
  const auto studies = ep::io::read_studies(a.c.input);
  const auto kinds = parse_measures(a.measures);
  const json config{{"command", "corr"},          {"input", a.c.input},
                    {"measures", measure_names_json(kinds)}, {"correction", a.c.correction},
                    {"level", a.c.level}};

  std::vector<ep::corpus::Record> records;
  json out = json::array();
  for (const auto& [id, group] : group_by_meta(studies)) {
    ep::corpus::Record rec{id, static_cast<int>(group.size()), {}, {}, {}};
    for (auto kind : kinds) {
      const auto r = try_correlate(group, kind, a.c.correction, a.c.level);
      if (kind == ep::EffectKind::OR) rec.rho_or = r;
      if (kind == ep::EffectKind::RR) rec.rho_rr = r;
      if (kind == ep::EffectKind::RD) rec.rho_rd = r;
    }
    out.push_back(ep::io::to_json(rec));
    records.push_back(std::move(rec));
  }
  if (a.c.format == "csv") {
    std::ostringstream csv;
    ep::io::write_records(csv, records, csv_comment("corr", config));
    emit(csv.str(), a.c.output);
  } else {
    emit(dump({{"metadata", ep::io::metadata(config)}, {"correlations", out}}), a.c.output);
  }
  return 0;
}

// --- corpus -----------------------------------------------------------------

struct AnalyzeArgs {
  Common c;
  ep::corpus::AnalyzeOptions opts;
  std::string summary;
};

int run_corpus_analyze(AnalyzeArgs a) {
  a.opts.correction = a.c.correction;
  a.opts.level = a.c.level;
  const auto studies = ep::io::read_studies(a.c.input);
  const json config{{"command", "corpus analyze"}, {"input", a.c.input},
                    {"min_studies", a.opts.min_studies}, {"threshold", a.opts.threshold},
                    {"split_at", a.opts.split_at},       {"correction", a.opts.correction},
                    {"level", a.opts.level}};
  const auto analysis = ep::corpus::analyze(studies, a.opts);

  json summaries = json::array();
  for (const auto& s : analysis.summaries) summaries.push_back(ep::io::to_json(s));
  json skipped = json::array();
  for (const auto& [id, k] : analysis.skipped) skipped.push_back({{"meta_id", id}, {"k", k}});
  const json summary{{"metadata", ep::io::metadata(config)},
                     {"n_records", analysis.records.size()},
                     {"summaries", summaries},
                     {"skipped", skipped}};

  if (a.c.format == "csv") {
    std::ostringstream csv;
    ep::io::write_records(csv, analysis.records, csv_comment("corpus analyze", config));
    emit(csv.str(), a.c.output);
  } else {
    json recs = json::array();
    for (const auto& r : analysis.records) recs.push_back(ep::io::to_json(r));
    json full = summary;
    full["records"] = recs;
    emit(dump(full), a.c.output);
  }
  if (!a.summary.empty()) ep::io::write_atomic(a.summary, dump(summary));
  if (!a.c.plot.empty()) {
    ep::io::write_atomic(a.c.plot, ep::svg::scatter_plot(analysis.records, analysis.summaries));
  }
  return 0;
}

struct SimulateArgs {
  std::string output;
  std::string mechanism = "constant-rr";
  ep::corpus::SimMechanism::Config cfg;
  int n_meta = 1000;
};

int run_corpus_simulate(SimulateArgs a) {
  a.cfg.mechanism = ep::corpus::parse_mechanism(a.mechanism);
  const ep::corpus::SimMechanism mech(a.cfg);
  const json config{{"command", "corpus simulate"},
                    {"mechanism", std::string(ep::corpus::to_string(a.cfg.mechanism))},
                    {"effect", a.cfg.effect},
                    {"p0_min", a.cfg.p0_min},
                    {"p0_max", a.cfg.p0_max},
                    {"k_min", a.cfg.k_min},
                    {"k_max", a.cfg.k_max},
                    {"arm_min", a.cfg.arm_min},
                    {"arm_max", a.cfg.arm_max},
                    {"n_meta", a.n_meta},
                    {"seed", a.cfg.seed},
                    {"schema_version", ep::io::kSchemaVersion}};
  std::ostringstream out;
  ep::io::write_studies(out, ep::corpus::simulate(mech, a.n_meta),
                        csv_comment("corpus simulate", config));
  emit(out.str(), a.output);
  return 0;
}

// --- repro ------------------------------------------------------------------

struct ReproArgs {
  std::string output;
  std::string format = "text";
};

int run_repro(const std::string& which, const ReproArgs& a) {
  const auto rows = which == "table1" ? ep::fixtures::reproduce_table1()
                                      : ep::fixtures::reproduce_table2();
  const auto passed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.pass(); });
  const bool ok = passed == static_cast<std::ptrdiff_t>(rows.size());

  std::ostringstream out;
  if (a.format == "json") {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"label", r.label},
                     {"expected", r.expected},
                     {"actual", r.actual},
                     {"tolerance", r.tolerance},
                     {"pass", r.pass()}});
    }
    out << dump({{"metadata", ep::io::metadata({{"command", "repro " + which}})},
                 {"rows", arr},
                 {"passed", passed},
                 {"total", rows.size()},
                 {"ok", ok}});
  } else {
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-4s %-40s expected %8.3f  actual %10.5f  tol %.3f\n",
                    r.pass() ? "ok" : "DIFF", r.label.c_str(), r.expected, r.actual, r.tolerance);
      out << buf;
    }
    out << which << ": " << passed << "/" << rows.size() << " values match\n";
  }
  emit(out.str(), a.output);
  return ok ? 0 : kExitMismatch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effect-measure estimation, meta-analysis and portability screening"};
  app.set_version_flag("--version", std::string(ep::io::kToolVersion));
  app.require_subcommand(1);
  std::function<int()> action;

  MeasuresArgs measures;
  auto* m = app.add_subcommand("measures", "Per-study OR, RR and RD with Wald intervals");
  add_input(m, measures.c);
  add_output(m, measures.c);
  add_level(m, measures.c);
  add_correction(m, measures.c);
  m->add_option("--measure", measures.measures, "Measures to report")
      ->delimiter(',')
      ->transform(CLI::IsMember(kMeasureNames, CLI::ignore_case));
  m->callback([&] { action = [&] { return run_measures(measures); }; });

  GlmArgs glm;
  auto* g = app.add_subcommand("glm", "Binomial regression (logit or log link)");
  add_input(g, glm.c);
  add_output(g, glm.c);
  add_level(g, glm.c);
  g->add_option("--link", glm.link)->transform(CLI::IsMember({"logit", "log"}, CLI::ignore_case));
  g->add_option("--terms", glm.terms, "Comma-separated terms, products as X:Z");
  g->add_option("--reduced", glm.reduced, "Terms of a nested model for a likelihood-ratio test");
  g->add_option("--exposure", glm.exposure, "Covariate to standardize over");
  g->add_option("--resamples", glm.resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
  g->add_option("--seed", glm.seed);
  g->callback([&] { action = [&] { return run_glm(glm); }; });

  MetaArgs meta;
  auto* me = app.add_subcommand("meta", "Two-stage meta-analysis per meta_id");
  add_input(me, meta.c);
  add_output(me, meta.c);
  add_level(me, meta.c);
  add_correction(me, meta.c);
  add_plot(me, meta.c);
  me->add_option("--measure", meta.measure)->transform(CLI::IsMember(kMeasureNames, CLI::ignore_case));
  me->add_option("--method", meta.method)
      ->transform(CLI::IsMember({"fe", "dl", "reml"}, CLI::ignore_case));
  me->callback([&] { action = [&] { return run_meta(meta); }; });

  BglmmArgs bg;
  auto* b = app.add_subcommand("bglmm", "Bivariate binomial-normal mixed model");
  add_input(b, bg.c);
  add_output(b, bg.c);
  add_level(b, bg.c);
  add_correction(b, bg.c);
  add_plot(b, bg.c);
  b->add_option("--meta-id", bg.meta_id, "Meta-analysis to fit when the input holds several");
  b->add_option("--quadrature", bg.quadrature, "Gauss-Hermite nodes per dimension")
      ->check(CLI::Range(5, 200));
  b->add_option("--grid-points", bg.grid_points)->check(CLI::Range(2, 1000));
  b->add_option("--draws", bg.draws, "Monte Carlo draws for the bands")->check(CLI::Range(0, 1000000));
  b->add_option("--seed", bg.seed);
  b->add_flag("--plug-in", bg.plug_in, "Conditional curve at the point estimates without averaging");
  b->callback([&] { action = [&] { return run_bglmm(bg); }; });

  CorrArgs corr;
  auto* c = app.add_subcommand("corr", "Spearman correlation of effect with baseline risk");
  add_input(c, corr.c);
  add_output(c, corr.c);
  add_level(c, corr.c);
  add_correction(c, corr.c);
  c->add_option("--measure", corr.measures)
      ->delimiter(',')
      ->transform(CLI::IsMember(kMeasureNames, CLI::ignore_case));
  c->callback([&] { action = [&] { return run_corr(corr); }; });

  auto* corpus = app.add_subcommand("corpus", "Corpus screening and simulation");
  corpus->require_subcommand(1);

  AnalyzeArgs an;
  auto* ca = corpus->add_subcommand("analyze", "Per meta-analysis correlations and summaries");
  add_input(ca, an.c);
  add_output(ca, an.c);
  add_level(ca, an.c);
  add_correction(ca, an.c);
  add_plot(ca, an.c);
  ca->add_option("--min-studies", an.opts.min_studies)->check(CLI::Range(4, 1000000));
  ca->add_option("--threshold", an.opts.threshold)->check(CLI::Range(0.0, 1.0));
  ca->add_option("--split-at", an.opts.split_at)->check(CLI::PositiveNumber);
  ca->add_option("--summary", an.summary, "Also write the summary JSON here")->check(kWritablePath);
  ca->callback([&] { action = [&] { return run_corpus_analyze(an); }; });

  SimulateArgs sim;
  auto* cs = corpus->add_subcommand("simulate", "Synthetic corpus with a fixed effect mechanism");
  cs->add_option("-o,--output", sim.output, "Study CSV (default: stdout)")->check(kWritablePath);
  cs->add_option("--mechanism", sim.mechanism)
      ->transform(CLI::IsMember({"constant-or", "constant-rr", "constant-rd", "constant_or",
                                 "constant_rr", "constant_rd"},
                                CLI::ignore_case));
  cs->add_option("--effect", sim.cfg.effect, "OR, RR or RD held constant");
  cs->add_option("--n-meta", sim.n_meta)->check(CLI::PositiveNumber);
  cs->add_option("--seed", sim.cfg.seed);
  cs->add_option("--p0-min", sim.cfg.p0_min);
  cs->add_option("--p0-max", sim.cfg.p0_max);
  cs->add_option("--k-min", sim.cfg.k_min);
  cs->add_option("--k-max", sim.cfg.k_max);
  cs->add_option("--arm-min", sim.cfg.arm_min);
  cs->add_option("--arm-max", sim.cfg.arm_max);
  cs->callback([&] { action = [&] { return run_corpus_simulate(sim); }; });

  ReproArgs repro;
  std::string table;
  auto* r = app.add_subcommand("repro", "Regenerate the worked-example tables and diff them");
  r->add_option("table", table)->required()->check(CLI::IsMember({"table1", "table2"}));
  r->add_option("-o,--output", repro.output)->check(kWritablePath);
  r->add_option("--format", repro.format)->check(CLI::IsMember({"text", "json"}));
  r->callback([&] { action = [&] { return run_repro(table, repro); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error(e.get_name(), "usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    report_error("UsageError", "usage", e.what(), kExitUsage);
    return kExitUsage;
  } catch (const ep::EmptyCorpusError& e) {
    json skipped = json::array();
    for (const auto& [id, k] : e.skipped()) skipped.push_back({{"meta_id", id}, {"k", k}});
    report_error(e.name(), "validation", e.what(), kExitValidation, {{"skipped", skipped}});
    return kExitValidation;
  } catch (const ep::Error& e) {
    const bool validation = e.error_class() == ep::ErrorClass::validation;
    const int code = validation ? kExitValidation : kExitNumerical;
    report_error(e.name(), validation ? "validation" : "numerical", e.what(), code);
    return code;
  } catch (const std::exception& e) {
    report_error("InternalError", "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  }
}
