#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "format.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/pipeline.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"input", {"survival", "imaging", "expression", "clinical"}},
      {"simulate",
       {"seed", "n", "p_imaging", "q_expression", "beta_imaging", "beta_expression", "beta_clinical", "clinical",
        "rho", "block_size", "eta", "snr", "noise_sd", "baseline_rate", "censoring_target"}},
      {"analysis", {"cox_imaging", "cox_expression", "integrate", "associate", "evaluate"}},
      {"solver",
       {"folds", "grid_size", "ratio", "coefficient_tolerance", "kkt_tolerance", "inner_tolerance", "max_sweeps",
        "group_coefficient_tolerance", "group_kkt_tolerance", "group_max_sweeps", "selection", "qc_missing_threshold",
        "qc_variance_epsilon"}},
      {"protocol", {"master_seed", "n_repeats", "train_fraction", "min_success_fraction"}},
      {"output", {"dir", "svg"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& raw, const std::string& where) {
  const auto s = trim(raw);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  const auto s = trim(raw);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError(where + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// "1:0.8, 3:-1" with 1-based indices.
std::vector<Effect> parse_effects(const std::string& s, const std::string& where) {
  std::vector<Effect> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw ConfigError(where + ": expected index:value, got '" + item + "'");
    const int index = parse_number<int>(parts[0], where);
    if (index < 1) throw ConfigError(where + ": indices start at 1");
    out.push_back({index - 1, parse_number<double>(parts[1], where)});
  }
  return out;
}

// "feature:gene:value, ..." with 1-based indices.
std::vector<LinkEffect> parse_links(const std::string& s, const std::string& where) {
  std::vector<LinkEffect> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError(where + ": expected feature:gene:value, got '" + item + "'");
    const int f = parse_number<int>(parts[0], where);
    const int g = parse_number<int>(parts[1], where);
    if (f < 1 || g < 1) throw ConfigError(where + ": indices start at 1");
    out.push_back({f - 1, g - 1, parse_number<double>(parts[2], where)});
  }
  return out;
}

std::string effects_text(const std::vector<Effect>& list) {
  std::string s;
  for (const auto& e : list) {
    if (!s.empty()) s += ", ";
    s += std::to_string(e.index + 1) + ":" + format_exact(e.value);
  }
  return s;
}

std::string links_text(const std::vector<LinkEffect>& list) {
  std::string s;
  for (const auto& e : list) {
    if (!s.empty()) s += ", ";
    s += std::to_string(e.feature + 1) + ":" + std::to_string(e.gene + 1) + ":" + format_exact(e.value);
  }
  return s;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  template <class T>
  void number(const std::string& key, T& target) const {
    if (auto v = raw(key)) target = parse_number<T>(*v, where(key));
  }
  void flag(const std::string& key, bool& target) const {
    if (auto v = raw(key)) target = parse_bool(*v, where(key));
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  const auto& allowed = allowed_keys();
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) {
      throw ConfigError(body.empty() ? "key '" + section + "' outside a section" : "unknown section [" + section + "]");
    }
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }
  auto section = [&](const char* name) {
    const auto child = tree.get_child_optional(name);
    return Section(child ? &*child : nullptr, name);
  };

  PipelineConfig c;
  const auto input = section("input");
  const auto simulate = section("simulate");
  const bool has_input = tree.get_child_optional("input").has_value();
  const bool has_simulate = tree.get_child_optional("simulate").has_value();
  if (has_input && has_simulate) throw ConfigError("config has both [input] and [simulate]");
  if (has_input) {
    InputFiles files;
    auto required = [&](const char* key) {
      const auto v = input.raw(key);
      if (!v || v->empty()) throw ConfigError("[input] " + std::string(key) + " is required");
      return resolve(*v, base_dir);
    };
    files.survival = required("survival");
    files.imaging = required("imaging");
    files.expression = required("expression");
    if (auto v = input.raw("clinical"); v && !v->empty()) files.clinical = resolve(*v, base_dir);
    c.input = std::move(files);
  } else {
    SimulationSpec s;
    simulate.number("n", s.n);
    simulate.number("p_imaging", s.p_imaging);
    simulate.number("q_expression", s.q_expression);
    if (auto v = simulate.raw("beta_imaging")) s.beta_imaging = parse_effects(*v, simulate.where("beta_imaging"));
    if (auto v = simulate.raw("beta_expression")) s.beta_expression = parse_effects(*v, simulate.where("beta_expression"));
    if (auto v = simulate.raw("beta_clinical")) s.beta_clinical = parse_effects(*v, simulate.where("beta_clinical"));
    simulate.flag("clinical", s.clinical);
    simulate.number("rho", s.rho);
    simulate.number("block_size", s.block_size);
    if (auto v = simulate.raw("eta")) s.eta = parse_links(*v, simulate.where("eta"));
    simulate.number("snr", s.snr);
    simulate.number("noise_sd", s.noise_sd);
    simulate.number("baseline_rate", s.baseline_rate);
    simulate.number("censoring_target", s.censoring_target);
    c.simulation = std::move(s);
  }

  const auto analysis = section("analysis");
  analysis.flag("cox_imaging", c.analysis.cox_imaging);
  analysis.flag("cox_expression", c.analysis.cox_expression);
  analysis.flag("integrate", c.analysis.integrate);
  analysis.flag("associate", c.analysis.associate);
  analysis.flag("evaluate", c.analysis.evaluate);

  const auto solver = section("solver");
  auto& sv = c.solver;
  solver.number("folds", sv.folds);
  solver.number("grid_size", sv.grid_size);
  solver.number("ratio", sv.ratio);
  solver.number("coefficient_tolerance", sv.lasso.coefficient_tolerance);
  solver.number("kkt_tolerance", sv.lasso.kkt_tolerance);
  solver.number("inner_tolerance", sv.lasso.inner_tolerance);
  solver.number("max_sweeps", sv.lasso.max_sweeps);
  solver.number("group_coefficient_tolerance", sv.group.coefficient_tolerance);
  solver.number("group_kkt_tolerance", sv.group.kkt_tolerance);
  solver.number("group_max_sweeps", sv.group.max_sweeps);
  if (auto v = solver.raw("selection")) {
    if (*v == "min") {
      sv.rule = SelectionRule::Min;
    } else if (*v == "1se") {
      sv.rule = SelectionRule::OneStandardError;
    } else {
      throw ConfigError("[solver] selection must be min or 1se");
    }
  }
  solver.number("qc_missing_threshold", sv.qc_missing_threshold);
  solver.number("qc_variance_epsilon", sv.qc_variance_epsilon);
  if (sv.folds < 2) throw ConfigError("[solver] folds must be at least 2");
  if (sv.grid_size < 1) throw ConfigError("[solver] grid_size must be positive");
  if (!(sv.ratio > 0.0 && sv.ratio < 1.0)) throw ConfigError("[solver] ratio must lie in (0, 1)");

  const auto protocol = section("protocol");
  if (!protocol.raw("master_seed")) throw ConfigError("[protocol] master_seed is required");
  protocol.number("master_seed", c.protocol.master_seed);
  protocol.number("n_repeats", c.protocol.n_repeats);
  protocol.number("train_fraction", c.protocol.train_fraction);
  protocol.number("min_success_fraction", c.protocol.min_success_fraction);
  if (c.protocol.n_repeats < 1) throw ConfigError("[protocol] n_repeats must be positive");
  if (!(c.protocol.train_fraction > 0.0 && c.protocol.train_fraction < 1.0)) {
    throw ConfigError("[protocol] train_fraction must lie in (0, 1)");
  }

  if (has_simulate) {
    // Optional explicit seed for the cohort; otherwise derived from master_seed.
    if (auto v = simulate.raw("seed")) {
      c.simulation_seed_override = parse_number<std::uint64_t>(*v, simulate.where("seed"));
    }
  } else if (!has_input) {
    throw ConfigError("config needs an [input] or a [simulate] section");
  }

  const auto output = section("output");
  if (auto v = output.raw("dir"); v && !v->empty()) c.output_dir = resolve(*v, base_dir);
  output.flag("svg", c.svg);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::uint64_t simulation_seed(const PipelineConfig& config) {
  if (config.simulation_seed_override) return *config.simulation_seed_override;
  return derive_seed(config.protocol.master_seed, stream_id("simulate"));
}

std::string config_to_ini(const PipelineConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  if (c.input) {
    o << "[input]\n";
    o << "survival = " << c.input->survival.string() << '\n';
    o << "imaging = " << c.input->imaging.string() << '\n';
    o << "expression = " << c.input->expression.string() << '\n';
    if (c.input->clinical) o << "clinical = " << c.input->clinical->string() << '\n';
  } else if (c.simulation) {
    const auto& s = *c.simulation;
    o << "[simulate]\n";
    if (c.simulation_seed_override) o << "seed = " << *c.simulation_seed_override << '\n';
    o << "n = " << s.n << '\n';
    o << "p_imaging = " << s.p_imaging << '\n';
    o << "q_expression = " << s.q_expression << '\n';
    o << "beta_imaging = " << effects_text(s.beta_imaging) << '\n';
    o << "beta_expression = " << effects_text(s.beta_expression) << '\n';
    o << "beta_clinical = " << effects_text(s.beta_clinical) << '\n';
    o << "clinical = " << b(s.clinical) << '\n';
    o << "rho = " << format_exact(s.rho) << '\n';
    o << "block_size = " << s.block_size << '\n';
    o << "eta = " << links_text(s.eta) << '\n';
    o << "snr = " << format_exact(s.snr) << '\n';
    o << "noise_sd = " << format_exact(s.noise_sd) << '\n';
    o << "baseline_rate = " << format_exact(s.baseline_rate) << '\n';
    o << "censoring_target = " << format_exact(s.censoring_target) << '\n';
  }
  o << "\n[analysis]\n";
  o << "cox_imaging = " << b(c.analysis.cox_imaging) << '\n';
  o << "cox_expression = " << b(c.analysis.cox_expression) << '\n';
  o << "integrate = " << b(c.analysis.integrate) << '\n';
  o << "associate = " << b(c.analysis.associate) << '\n';
  o << "evaluate = " << b(c.analysis.evaluate) << '\n';
  const auto& sv = c.solver;
  o << "\n[solver]\n";
  o << "folds = " << sv.folds << '\n';
  o << "grid_size = " << sv.grid_size << '\n';
  o << "ratio = " << format_exact(sv.ratio) << '\n';
  o << "coefficient_tolerance = " << format_exact(sv.lasso.coefficient_tolerance) << '\n';
  o << "kkt_tolerance = " << format_exact(sv.lasso.kkt_tolerance) << '\n';
  o << "inner_tolerance = " << format_exact(sv.lasso.inner_tolerance) << '\n';
  o << "max_sweeps = " << sv.lasso.max_sweeps << '\n';
  o << "group_coefficient_tolerance = " << format_exact(sv.group.coefficient_tolerance) << '\n';
  o << "group_kkt_tolerance = " << format_exact(sv.group.kkt_tolerance) << '\n';
  o << "group_max_sweeps = " << sv.group.max_sweeps << '\n';
  o << "selection = " << (sv.rule == SelectionRule::Min ? "min" : "1se") << '\n';
  o << "qc_missing_threshold = " << format_exact(sv.qc_missing_threshold) << '\n';
  o << "qc_variance_epsilon = " << format_exact(sv.qc_variance_epsilon) << '\n';
  o << "\n[protocol]\n";
  o << "master_seed = " << c.protocol.master_seed << '\n';
  o << "n_repeats = " << c.protocol.n_repeats << '\n';
  o << "train_fraction = " << format_exact(c.protocol.train_fraction) << '\n';
  o << "min_success_fraction = " << format_exact(c.protocol.min_success_fraction) << '\n';
  o << "\n[output]\n";
  o << "dir = " << c.output_dir.string() << '\n';
  o << "svg = " << b(c.svg) << '\n';
  return o.str();
}

}  // namespace hdsurv
