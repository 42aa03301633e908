#include "hdsurv/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "format.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/integration.hpp"
#include "hdsurv/render.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

const char* kOutputs[] = {"cox_imaging.tsv", "cox_imaging_cv.tsv", "cox_expression.tsv", "cox_expression_cv.tsv",
                          "integration.tsv", "integration_summary.txt", "signature_correlation.txt", "eta_heatmap.tsv",
                          "association_correlations.tsv", "evaluation.json", "qc_report.tsv", "run_manifest.json",
                          "eta_heatmap.svg", "association_correlations.svg", "cox_imaging_cv.svg",
                          "cox_expression_cv.svg"};
const char* kStages[] = {"data", "cox_imaging", "cox_expression", "integrate", "associate", "evaluate"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Stage dependencies that failed propagate as this error type.
class DependencyError : public Error {
 public:
  using Error::Error;
};

struct CoxStageResult {
  CoxFit fit;
  CvResult cv;
};

class Runner {
 public:
  explicit Runner(const PipelineConfig& config) : config_(config), dir_(config.output_dir) {}

  PipelineResult run();

 private:
  std::uint64_t seed_for(const char* stage) const { return derive_seed(config_.protocol.master_seed, stream_id(stage)); }
  bool has_clinical() const { return data_.has_block("clinical"); }

  void load_data();
  const CoxStageResult& cox_stage(const std::string& block);
  void write_cox(const std::string& stage, const std::string& block);
  void integrate();
  void associate();
  void evaluate();
  const SplitPlan& plan();
  FeatureBlock clinical_or_empty() const;
  void stage(const std::string& name, bool enabled, const std::function<void()>& body);
  void write_manifest(const std::string& started);

  const PipelineConfig& config_;
  fs::path dir_;
  Dataset data_;
  std::vector<QcRemoval> qc_removed_;
  std::vector<std::string> qc_blocks_;
  std::map<std::string, CoxStageResult> cox_;
  std::map<std::string, std::string> cox_failures_;
  std::optional<SplitPlan> plan_;
  PipelineResult result_;
  bool data_ok_ = false;
};

void Runner::stage(const std::string& name, bool enabled, const std::function<void()>& body) {
  if (!enabled) return;
  StageOutcome outcome;
  outcome.stage = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (name != "data" && !data_ok_) throw DependencyError("input data could not be loaded");
    body();
  } catch (const NumericalError& e) {
    outcome.ok = false;
    outcome.numerical = true;
    outcome.message = e.what();
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.message = e.what();
  }
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!outcome.ok) write_text(dir_ / (name + ".failed"), outcome.message + "\n");
  result_.stages.push_back(std::move(outcome));
}

void Runner::load_data() {
  Dataset raw;
  if (config_.input) {
    const auto& in = *config_.input;
    auto loaded = load_dataset(in.survival, {{"imaging", in.imaging}, {"expression", in.expression}}, in.clinical);
    raw = std::move(loaded.dataset);
  } else {
    raw = simulate(*config_.simulation, simulation_seed(config_)).dataset;
  }
  if (raw.size() == 0) throw ValidationError("dataset is empty");
  for (auto& block : raw.blocks) {
    if (block.name == "clinical") continue;
    auto qc = quality_control(block, config_.solver.qc_missing_threshold, config_.solver.qc_variance_epsilon);
    for (auto& r : qc.removed) {
      qc_removed_.push_back(std::move(r));
      qc_blocks_.push_back(block.name);
    }
    block = std::move(qc.block);
  }
  data_ = std::move(raw);
  std::string report = "block\tcolumn\treason\tvalue\n";
  for (std::size_t k = 0; k < qc_removed_.size(); ++k) {
    report += qc_blocks_[k] + "\t" + qc_removed_[k].column + "\t" + qc_removed_[k].reason + "\t" +
              format_g6(qc_removed_[k].value) + "\n";
  }
  write_text(dir_ / "qc_report.tsv", report);
  data_ok_ = true;
}

const CoxStageResult& Runner::cox_stage(const std::string& block) {
  if (auto it = cox_.find(block); it != cox_.end()) return it->second;
  if (auto it = cox_failures_.find(block); it != cox_failures_.end()) {
    throw DependencyError("Cox " + block + " fit failed: " + it->second);
  }
  try {
    std::vector<std::string> blocks{block};
    if (has_clinical()) blocks.push_back("clinical");
    const auto problem = make_cox_problem(data_, blocks);
    CvOptions cv;
    cv.folds = config_.solver.folds;
    cv.grid_size = config_.solver.grid_size;
    cv.ratio = config_.solver.ratio;
    cv.seed = seed_for(("cox_" + block).c_str());
    cv.threads = config_.threads;
    cv.lasso = config_.solver.lasso;
    const auto selection = cross_validate_with_path(problem, problem.penalty_factors(), cv);
    CoxStageResult r{selection.fit(config_.solver.rule), selection.cv};
    if (!r.fit.converged || !(r.fit.kkt_residual <= config_.solver.lasso.kkt_tolerance)) {
      throw NumericalError("Cox " + block + " fit failed the KKT check (residual " + format_g6(r.fit.kkt_residual) + ")");
    }
    return cox_.emplace(block, std::move(r)).first->second;
  } catch (const std::exception& e) {
    cox_failures_.emplace(block, e.what());
    throw;
  }
}

void Runner::write_cox(const std::string& stage, const std::string& block) {
  const auto& r = cox_stage(block);
  std::string table = "variable\tcoefficient\n";
  for (std::size_t j = 0; j < r.fit.names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    if (r.fit.penalty_factors(k) > 0.0 && r.fit.coefficients(k) != 0.0) {
      table += r.fit.names[j] + "\t" + format_g6(r.fit.coefficients(k)) + "\n";
    }
  }
  // Clinical rows are always listed; Stage level C is the reference category.
  for (const auto& name : clinical_column_names()) {
    const auto k = r.fit.column(name);
    table += name + "\t" + (k >= 0 ? format_g6(r.fit.coefficients(k)) : std::string("NA")) + "\n";
  }
  table += "Stage_Level_C\tNA\n";
  write_text(dir_ / (stage + ".tsv"), table);

  std::string cv = "# tau_min=" + format_g6(r.cv.tau_min) + "\n# tau_1se=" + format_g6(r.cv.tau_1se) +
                   "\n# selected_tau=" + format_g6(r.fit.tau) + "\n# nonzero_penalized=" +
                   std::to_string(r.fit.nonzero_penalized()) + "\ntau\tcv_deviance\tcv_sd\n";
  for (std::size_t t = 0; t < r.cv.tau_grid.size(); ++t) {
    cv += format_g6(r.cv.tau_grid[t]) + "\t" + format_g6(r.cv.cv_mean[t]) + "\t" + format_g6(r.cv.cv_sd[t]) + "\n";
  }
  write_text(dir_ / (stage + "_cv.tsv"), cv);
  if (config_.svg) render_svg_file(dir_ / (stage + "_cv.tsv"), RenderKind::Line, dir_ / (stage + "_cv.svg"));
}

FeatureBlock Runner::clinical_or_empty() const {
  if (has_clinical()) return data_.block("clinical");
  FeatureBlock empty;
  empty.name = "clinical";
  empty.values.resize(data_.size(), 0);
  empty.penalty_factor.resize(0);
  return empty;
}

std::string wald_label(const std::string& term) {
  if (term == kImagingSignature) return "imaging feature";
  if (term == kExpressionSignature) return "gene expression";
  return term;
}

void Runner::integrate() {
  const auto& imaging = cox_stage("imaging");
  const auto& expression = cox_stage("expression");
  SignaturePair pair{combined_signature(imaging.fit, data_.block("imaging")),
                     combined_signature(expression.fit, data_.block("expression"))};
  const auto corr = signature_correlation(pair);
  write_text(dir_ / "signature_correlation.txt",
             corr.defined() ? "correlation\t" + format_g6(corr.value) + "\n"
                            : "correlation\tNA\nreason\t" + corr.undefined_reason + "\n");

  const auto fit = fit_integrated_cox(pair, clinical_or_empty(), data_.records);
  std::string table = "term\tcoefficient\tse\tz\tp_value\n";
  std::string summary;
  for (const auto& w : fit.wald) {
    table += w.term + "\t" + format_g6(w.coefficient) + "\t" + format_g6(w.standard_error) + "\t" + format_g6(w.z) +
             "\t" + format_g6(w.p_value) + "\n";
    summary += format_wald(w.coefficient, wald_label(w.term), w.p_value) + "\n";
  }
  for (const auto& e : fit.excluded) {
    table += e + "\tNA\tNA\tNA\tNA\n";
    summary += e + " excluded (zero variance)\n";
  }
  write_text(dir_ / "integration.tsv", table);
  write_text(dir_ / "integration_summary.txt", summary);
}

const SplitPlan& Runner::plan() {
  if (!plan_) {
    plan_ = make_split_plan(static_cast<int>(data_.size()), seed_for("split"), config_.protocol.n_repeats,
                            config_.protocol.train_fraction);
  }
  return *plan_;
}

void Runner::associate() {
  const auto& xb = data_.block("imaging");
  const auto& zb = data_.block("expression");
  const auto zs = standardize(zb);
  GroupCvOptions cv;
  cv.folds = config_.solver.folds;
  cv.grid_size = config_.solver.grid_size;
  cv.ratio = config_.solver.ratio;
  cv.seed = seed_for("associate");
  cv.threads = config_.threads;
  cv.solver = config_.solver.group;
  const auto selection = cross_validate_groups_with_path(xb.values, zs.block.values, cv);
  const auto& fit = selection.fit(config_.solver.rule);
  if (!fit.converged || !(fit.kkt_residual <= config_.solver.group.kkt_tolerance)) {
    throw NumericalError("group Lasso fit failed the KKT check (residual " + format_g6(fit.kkt_residual) + ")");
  }
  std::string heat = "# tau=" + format_g6(fit.tau) + "\n# nonzero_entries=" + std::to_string(fit.nonzero_entries()) +
                     "\n# selected_genes=" + std::to_string(fit.selected_genes.size()) + "\nfeature";
  for (const auto& g : zb.column_names) heat += "\t" + g;
  heat += "\n";
  for (Eigen::Index f = 0; f < fit.eta.rows(); ++f) {
    heat += xb.column_names[static_cast<std::size_t>(f)];
    for (Eigen::Index g = 0; g < fit.eta.cols(); ++g) heat += "\t" + format_g6(fit.eta(f, g));
    heat += "\n";
  }
  write_text(dir_ / "eta_heatmap.tsv", heat);
  if (config_.svg) render_svg_file(dir_ / "eta_heatmap.tsv", RenderKind::Heatmap, dir_ / "eta_heatmap.svg");

  AssociationConfig ac;
  ac.cv = cv;
  ac.rule = config_.solver.rule;
  ac.threads = config_.threads;
  ac.min_success_fraction = config_.protocol.min_success_fraction;
  const auto eval = evaluate_association(data_, ac, plan());
  int failed = 0;
  for (const auto& f : eval.repeat_failure) failed += f.empty() ? 0 : 1;
  std::string table = "# repeats=" + std::to_string(plan().n_repeats) + "\n# failed_repeats=" + std::to_string(failed) +
                      "\nfeature\tmean\tsd\tdefined\texcluded\n";
  for (const auto f : eval.sorted) {
    table += eval.features[f] + "\t" + format_g6(eval.mean[f]) + "\t" + format_g6(eval.sd[f]) + "\t" +
             std::to_string(eval.defined[f]) + "\t" + std::to_string(eval.excluded[f]) + "\n";
  }
  write_text(dir_ / "association_correlations.tsv", table);
  if (config_.svg) {
    render_svg_file(dir_ / "association_correlations.tsv", RenderKind::MeanSd, dir_ / "association_correlations.svg");
  }
}

void Runner::evaluate() {
  SurvivalEvaluationConfig ec;
  std::vector<std::string> imaging{"imaging"}, expression{"expression"};
  if (has_clinical()) {
    imaging.push_back("clinical");
    expression.push_back("clinical");
  }
  ec.variants = {{"imaging", imaging}, {"expression", expression}};
  ec.integrated = {{"combined", "imaging", "expression", has_clinical() ? "clinical" : ""}};
  ec.cv.folds = config_.solver.folds;
  ec.cv.grid_size = config_.solver.grid_size;
  ec.cv.ratio = config_.solver.ratio;
  ec.cv.lasso = config_.solver.lasso;
  ec.rule = config_.solver.rule;
  ec.threads = config_.threads;
  ec.min_success_fraction = config_.protocol.min_success_fraction;
  const auto& p = plan();
  const auto eval = evaluate_survival_models(data_, ec, p);

  json j;
  j["metric"] = "c_index";
  j["protocol"] = {{"n", p.n},
                   {"n_repeats", p.n_repeats},
                   {"train_fraction", p.train_fraction},
                   {"split_seed", p.master_seed}};
  json variants = json::array();
  for (std::size_t v = 0; v < eval.variants.size(); ++v) {
    const auto& s = eval.summaries[v];
    json values = json::array();
    for (double x : eval.values[v]) values.push_back(number_or_null(x));
    variants.push_back({{"name", eval.variants[v]},
                        {"mean", number_or_null(s.mean)},
                        {"median", number_or_null(s.median)},
                        {"sd", number_or_null(s.sd)},
                        {"count", s.count},
                        {"values", values}});
  }
  j["variants"] = variants;
  json failures = json::array();
  for (std::size_t r = 0; r < eval.repeat_failure.size(); ++r) {
    if (!eval.repeat_failure[r].empty()) failures.push_back({{"repeat", r}, {"reason", eval.repeat_failure[r]}});
  }
  j["failed_repeats"] = failures;
  write_text(dir_ / "evaluation.json", j.dump(2) + "\n");
}

void Runner::write_manifest(const std::string& started) {
  json m;
  m["tool"] = "hdsurv";
  m["version"] = version();
  m["started_at"] = started;
  m["config"] = config_to_ini(config_);
  json seeds;
  seeds["master_seed"] = config_.protocol.master_seed;
  if (config_.simulation) seeds["simulation"] = simulation_seed(config_);
  seeds["split"] = seed_for("split");
  seeds["cox_imaging"] = seed_for("cox_imaging");
  seeds["cox_expression"] = seed_for("cox_expression");
  seeds["associate"] = seed_for("associate");
  m["seeds"] = seeds;
  m["threads"] = config_.threads;
  if (data_ok_) {
    json blocks;
    for (const auto& b : data_.blocks) blocks[b.name] = b.cols();
    m["dataset"] = {{"subjects", data_.size()}, {"events", data_.event_count()}, {"columns", blocks},
                    {"qc_removed", qc_removed_.size()}};
  }
  json stages = json::array();
  double total = 0.0;
  for (const auto& s : result_.stages) {
    json entry{{"stage", s.stage}, {"status", s.ok ? "ok" : "failed"}, {"seconds", s.seconds}};
    if (!s.ok) entry["error"] = s.message;
    stages.push_back(entry);
    total += s.seconds;
  }
  m["stages"] = stages;
  m["total_seconds"] = total;
  m["exit_code"] = result_.exit_code;
  write_text(dir_ / "run_manifest.json", m.dump(2) + "\n");
}

PipelineResult Runner::run() {
  fs::create_directories(dir_);
  for (const char* name : kOutputs) fs::remove(dir_ / name);
  for (const char* name : kStages) fs::remove(dir_ / (std::string(name) + ".failed"));

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char started[32];
  std::strftime(started, sizeof started, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

  const auto& a = config_.analysis;
  const bool any = a.cox_imaging || a.cox_expression || a.integrate || a.associate || a.evaluate;
  stage("data", any, [&] { load_data(); });
  stage("cox_imaging", a.cox_imaging, [&] { write_cox("cox_imaging", "imaging"); });
  stage("cox_expression", a.cox_expression, [&] { write_cox("cox_expression", "expression"); });
  stage("integrate", a.integrate, [&] { integrate(); });
  stage("associate", a.associate, [&] { associate(); });
  stage("evaluate", a.evaluate, [&] { evaluate(); });

  bool any_failed = false, all_failed_numerical = true, data_failed = false;
  for (const auto& s : result_.stages) {
    if (s.ok) {
      all_failed_numerical = false;
      continue;
    }
    any_failed = true;
    if (s.stage == "data") data_failed = true;
    if (!s.numerical) all_failed_numerical = false;
  }
  if (data_failed) {
    result_.exit_code = kConfigError;
  } else if (any_failed) {
    result_.exit_code = all_failed_numerical ? kNumericalFailure : kPartialFailure;
  }
  write_manifest(started);
  return result_;
}

}  // namespace

const char* version() { return "0.1.0"; }

PipelineResult run_pipeline(const PipelineConfig& config) { return Runner(config).run(); }

PipelineConfig config_from_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!m.contains("config") || !m["config"].is_string()) throw ConfigError("manifest has no config echo");
  return parse_config(m["config"].get<std::string>(), manifest_path.parent_path());
}

}  // namespace hdsurv
