#include "hdsurv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "format.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {
namespace {

Eigen::MatrixXd compound_symmetric(Rng& rng, int n, int d, double rho, int block_size) {
  Eigen::MatrixXd m(n, d);
  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  for (int i = 0; i < n; ++i) {
    double shared = 0.0;
    for (int j = 0; j < d; ++j) {
      if (j % block_size == 0) shared = rng.normal();
      m(i, j) = a * shared + b * rng.normal();
    }
  }
  return m;
}

Eigen::VectorXd effects(const std::vector<Effect>& list, int size, const char* what) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
  for (const auto& e : list) {
    if (e.index < 0 || e.index >= size) {
      throw ValidationError(std::string(what) + " effect index " + std::to_string(e.index) + " is out of range");
    }
    v(e.index) = e.value;
  }
  return v;
}

FeatureBlock make_block(std::string name, Eigen::MatrixXd values, std::string (*column)(int)) {
  FeatureBlock b;
  b.name = std::move(name);
  for (int j = 0; j < values.cols(); ++j) b.column_names.push_back(column(j));
  b.penalty_factor = Eigen::VectorXd::Ones(values.cols());
  b.values = std::move(values);
  return b;
}

double censored_fraction(const Eigen::VectorXd& t, const Eigen::VectorXd& u, double c) {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t(i) > c * u(i)) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(t.size());
}

}  // namespace

std::string imaging_column(int j) { return "img_" + std::to_string(j + 1); }
std::string expression_column(int j) { return "gene_" + std::to_string(j + 1); }

std::string subject_name(int i, int n) {
  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%0*d", width, i + 1);
  return buf;
}

SimulatedData simulate(const SimulationSpec& spec, std::uint64_t seed) {
  if (spec.n < 2) throw ValidationError("simulation needs n >= 2");
  if (spec.p_imaging < 1) throw ValidationError("simulation needs at least one imaging feature");
  if (spec.q_expression < 0) throw ValidationError("q_expression must be nonnegative");
  if (!(spec.rho >= 0.0 && spec.rho < 1.0)) throw ValidationError("rho must lie in [0, 1)");
  if (spec.block_size < 1) throw ValidationError("block_size must be positive");
  if (!(spec.baseline_rate > 0.0)) throw ValidationError("baseline_rate must be positive");
  if (!(spec.censoring_target >= 0.0 && spec.censoring_target < 1.0)) {
    throw ValidationError("censoring_target must lie in [0, 1)");
  }
  if (!spec.eta.empty() && spec.q_expression == 0) throw ValidationError("eta requires an expression block");

  SimulatedData out;
  auto& truth = out.truth;
  truth.seed = seed;
  const int n = spec.n;
  truth.beta_imaging = effects(spec.beta_imaging, spec.p_imaging, "imaging");
  truth.beta_expression = effects(spec.beta_expression, spec.q_expression, "expression");
  truth.beta_clinical = effects(spec.beta_clinical, spec.clinical ? 5 : 0, "clinical");
  truth.eta = Eigen::MatrixXd::Zero(spec.p_imaging, spec.q_expression);
  for (const auto& e : spec.eta) {
    if (e.feature < 0 || e.feature >= spec.p_imaging || e.gene < 0 || e.gene >= spec.q_expression) {
      throw ValidationError("eta entry out of range");
    }
    truth.eta(e.feature, e.gene) = e.value;
  }

  Eigen::MatrixXd z;
  if (spec.q_expression > 0) {
    Rng rng(derive_seed(seed, stream_id("expression")));
    z = compound_symmetric(rng, n, spec.q_expression, spec.rho, spec.block_size);
  }
  Eigen::MatrixXd x;
  {
    Rng rng(derive_seed(seed, stream_id("imaging")));
    if (spec.eta.empty()) {
      x = compound_symmetric(rng, n, spec.p_imaging, spec.rho, spec.block_size);
    } else {
      x = z * truth.eta.transpose();
      for (int f = 0; f < spec.p_imaging; ++f) {
        double sd = 1.0;
        if (truth.eta.row(f).any()) {
          // Population signal variance under the generating covariance.
          double var = 0.0;
          for (int a = 0; a < spec.q_expression; ++a) {
            for (int b = 0; b < spec.q_expression; ++b) {
              const double cov = a == b ? 1.0 : (a / spec.block_size == b / spec.block_size ? spec.rho : 0.0);
              var += truth.eta(f, a) * truth.eta(f, b) * cov;
            }
          }
          sd = spec.snr > 0.0 ? std::sqrt(var / spec.snr) : spec.noise_sd;
        }
        for (int i = 0; i < n; ++i) x(i, f) += sd * rng.normal();
      }
    }
  }

  if (spec.clinical) {
    Rng rng(derive_seed(seed, stream_id("clinical")));
    static const char* stages[] = {"Stage IA", "Stage IB", "Stage IIA", "Stage IIB", "Stage IIIA", "Stage IV"};
    for (int i = 0; i < n; ++i) {
      ClinicalRow r;
      r.sex = rng.uniform() < 0.5 ? "F" : "M";
      r.age = std::round(std::clamp(65.0 + 10.0 * rng.normal(), 35.0, 90.0));
      r.stage = stages[rng.below(6)];
      r.longest_dim = std::round(10.0 * std::exp(1.0 + 0.4 * rng.normal())) / 10.0;
      r.shortest_dim = std::round(10.0 * r.longest_dim * (0.4 + 0.6 * rng.uniform())) / 10.0;
      if (r.shortest_dim <= 0.0) r.shortest_dim = 0.1;
      out.clinical_rows.push_back(std::move(r));
    }
  }

  auto& data = out.dataset;
  if (spec.q_expression > 0) data.blocks.push_back(make_block("expression", z, expression_column));
  data.blocks.push_back(make_block("imaging", x, imaging_column));
  if (spec.clinical) data.blocks.push_back(encode_clinical(out.clinical_rows));

  Eigen::VectorXd lp = x * truth.beta_imaging;
  if (spec.q_expression > 0) lp += z * truth.beta_expression;
  if (spec.clinical) lp += data.block("clinical").values * truth.beta_clinical;

  Eigen::VectorXd t(n), u(n);
  {
    Rng rng(derive_seed(seed, stream_id("event")));
    for (int i = 0; i < n; ++i) t(i) = rng.exponential(spec.baseline_rate * std::exp(lp(i)));
  }
  {
    Rng rng(derive_seed(seed, stream_id("censor")));
    for (int i = 0; i < n; ++i) {
      double v = rng.uniform();
      while (v <= 0.0) v = rng.uniform();
      u(i) = v;
    }
  }

  double c = std::numeric_limits<double>::infinity();
  double fraction = 0.0;
  if (spec.censoring_target > 0.0) {
    // The censored fraction decreases in c; bisect on log c and keep the closest.
    double lo = std::log(t.minCoeff()) - 50.0;
    double hi = std::log(t.maxCoeff() / u.minCoeff()) + 1.0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double f = censored_fraction(t, u, std::exp(mid));
      if (std::abs(f - spec.censoring_target) < best_gap) {
        best_gap = std::abs(f - spec.censoring_target);
        c = std::exp(mid);
        fraction = f;
      }
      if (f > spec.censoring_target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    if (best_gap > 0.05) {
      throw NumericalError("censoring target " + std::to_string(spec.censoring_target) + " is unattainable");
    }
  }
  truth.censoring_scale = c;
  truth.censoring_fraction = fraction;

  for (int i = 0; i < n; ++i) {
    const double ci = c * u(i);
    const bool event = t(i) <= ci;
    data.records.push_back({subject_name(i, n), event ? t(i) : ci, event});
  }
  return out;
}

void write_simulated(const SimulatedData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  const auto& ds = data.dataset;
  {
    auto f = open("survival.csv");
    f << "subject_id,time,status\n";
    for (const auto& r : ds.records) f << r.subject_id << ',' << format_exact(r.observed_time) << ',' << (r.event ? 1 : 0) << '\n';
  }
  for (const char* name : {"imaging", "expression"}) {
    if (!ds.has_block(name)) continue;
    const auto& b = ds.block(name);
    auto f = open((std::string(name) + ".csv").c_str());
    f << "subject_id";
    for (const auto& c : b.column_names) f << ',' << c;
    f << '\n';
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      f << ds.records[static_cast<std::size_t>(i)].subject_id;
      for (Eigen::Index j = 0; j < b.cols(); ++j) f << ',' << format_exact(b.values(i, j));
      f << '\n';
    }
  }
  if (!data.clinical_rows.empty()) {
    auto f = open("clinical.csv");
    f << "subject_id,sex,age,stage,longest_dim,shortest_dim\n";
    for (std::size_t i = 0; i < data.clinical_rows.size(); ++i) {
      const auto& r = data.clinical_rows[i];
      f << ds.records[i].subject_id << ',' << r.sex << ',' << format_exact(r.age) << ',' << r.stage << ','
        << format_exact(r.longest_dim) << ',' << format_exact(r.shortest_dim) << '\n';
    }
  }

  const auto& t = data.truth;
  nlohmann::ordered_json j;
  j["seed"] = t.seed;
  auto nonzero = [](const Eigen::VectorXd& v, std::string (*name)(int)) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (v(k) != 0.0) out[name(static_cast<int>(k))] = v(k);
    }
    return out;
  };
  j["beta_imaging"] = nonzero(t.beta_imaging, imaging_column);
  j["beta_expression"] = nonzero(t.beta_expression, expression_column);
  nlohmann::ordered_json clinical = nlohmann::ordered_json::object();
  for (Eigen::Index k = 0; k < t.beta_clinical.size(); ++k) {
    if (t.beta_clinical(k) != 0.0) clinical[clinical_column_names()[static_cast<std::size_t>(k)]] = t.beta_clinical(k);
  }
  j["beta_clinical"] = clinical;
  nlohmann::ordered_json eta = nlohmann::ordered_json::array();
  for (Eigen::Index f = 0; f < t.eta.rows(); ++f) {
    for (Eigen::Index g = 0; g < t.eta.cols(); ++g) {
      if (t.eta(f, g) != 0.0) {
        eta.push_back({{"feature", imaging_column(static_cast<int>(f))},
                       {"gene", expression_column(static_cast<int>(g))},
                       {"value", t.eta(f, g)}});
      }
    }
  }
  j["eta"] = eta;
  if (std::isfinite(t.censoring_scale)) {
    j["censoring_scale"] = t.censoring_scale;
  } else {
    j["censoring_scale"] = nullptr;
  }
  j["censoring_fraction"] = t.censoring_fraction;
  auto f = open("ground_truth.json");
  f << j.dump(2) << '\n';
}

}  // namespace hdsurv
