#include "hdsurv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hdsurv/errors.hpp"
#include "hdsurv/integration.hpp"
#include "hdsurv/parallel.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {
namespace {

std::vector<int> complement(const std::vector<int>& sorted_rows, int n) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) - sorted_rows.size());
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    if (k < sorted_rows.size() && sorted_rows[k] == i) {
      ++k;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

// Signature of a fit over selected rows: penalized terms only.
Eigen::VectorXd signature_rows(const CoxFit& fit, const Dataset& data, std::span<const int> rows) {
  CoxFit penalized = fit;
  for (Eigen::Index j = 0; j < penalized.coefficients.size(); ++j) {
    if (penalized.penalty_factors(j) == 0.0) penalized.coefficients(j) = 0.0;
  }
  return risk_scores(penalized, data, rows);
}

// Clinical covariates for the given rows; an empty block name gives zero columns.
FeatureBlock clinical_rows(const Dataset& data, const std::string& name, std::span<const int> rows) {
  if (!name.empty()) return data.block(name).select_rows(rows);
  FeatureBlock empty;
  empty.name = "clinical";
  empty.values.resize(static_cast<Eigen::Index>(rows.size()), 0);
  return empty;
}

void check_min_success(int failed, int repeats, double min_fraction, const std::vector<std::string>& reasons) {
  const int ok = repeats - failed;
  if (static_cast<double>(ok) < min_fraction * static_cast<double>(repeats)) {
    std::string first;
    for (const auto& r : reasons) {
      if (!r.empty()) {
        first = r;
        break;
      }
    }
    throw NumericalError(std::to_string(failed) + " of " + std::to_string(repeats) +
                         " repeats failed (first: " + first + ")");
  }
}

}  // namespace

SplitPlan make_split_plan(int n, std::uint64_t master_seed, int n_repeats, double train_fraction) {
  if (n < 8) throw ValidationError("split protocol needs at least 8 subjects");
  if (n_repeats < 1) throw ValidationError("n_repeats must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
  const auto n_train = static_cast<int>(std::lround(train_fraction * n));
  if (n_train < 1 || n_train >= n) throw ValidationError("train_fraction leaves an empty split");

  SplitPlan plan;
  plan.master_seed = master_seed;
  plan.n = n;
  plan.n_repeats = n_repeats;
  plan.train_fraction = train_fraction;
  for (int r = 0; r < n_repeats; ++r) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(r)));
    rng.shuffle(std::span(perm));
    std::vector<int> train(perm.begin(), perm.begin() + n_train);
    std::sort(train.begin(), train.end());
    plan.test.push_back(complement(train, n));
    plan.train.push_back(std::move(train));
  }
  return plan;
}

MetricSummary summarize(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  MetricSummary s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  s.median = v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

int SplitEvaluation::failed_repeats() const {
  return static_cast<int>(std::count_if(repeat_failure.begin(), repeat_failure.end(),
                                        [](const std::string& s) { return !s.empty(); }));
}

CoxFit fit_survival_variant(const Dataset& data, std::span<const int> train_rows, const ModelVariant& variant,
                            const CvOptions& cv, SelectionRule rule) {
  const Dataset train = data.subset(train_rows);
  if (train.event_count() == 0) throw NumericalError("training set has no events");
  const CoxProblem problem = make_cox_problem(train, variant.blocks, {.standardize = true, .drop_constant = true});
  if (problem.p() == 0) throw NumericalError("variant '" + variant.name + "' has no usable columns");

  CoxFit inner;
  if ((problem.penalty_factors().array() > 0.0).any()) {
    inner = cross_validate_with_path(problem, problem.penalty_factors(), cv).fit(rule);
  } else {
    inner = newton_fit(problem);
  }
  if (problem.dropped_columns().empty()) return inner;

  // Report dropped columns with coefficient 0 in block order.
  CoxFit out = inner;
  out.names.clear();
  std::vector<double> pf;
  for (const auto& name : variant.blocks) {
    const auto& b = data.block(name);
    out.names.insert(out.names.end(), b.column_names.begin(), b.column_names.end());
    for (Eigen::Index j = 0; j < b.cols(); ++j) pf.push_back(b.penalty_factor(j));
  }
  const auto width = static_cast<Eigen::Index>(out.names.size());
  out.coefficients = Eigen::VectorXd::Zero(width);
  out.solver_coefficients = Eigen::VectorXd::Zero(width);
  out.penalty_factors = Eigen::Map<const Eigen::VectorXd>(pf.data(), width);
  if (inner.standard_errors) out.standard_errors = Eigen::VectorXd::Constant(width, std::nan(""));
  for (std::size_t k = 0; k < inner.names.size(); ++k) {
    const auto j = out.column(inner.names[k]);
    const auto src = static_cast<Eigen::Index>(k);
    out.coefficients(j) = inner.coefficients(src);
    out.solver_coefficients(j) = inner.solver_coefficients(src);
    if (inner.standard_errors) (*out.standard_errors)(j) = (*inner.standard_errors)(src);
  }
  return out;
}

SplitEvaluation evaluate_survival_models(const Dataset& data, const SurvivalEvaluationConfig& config,
                                         const SplitPlan& plan) {
  if (plan.n != static_cast<int>(data.size())) throw ValidationError("split plan does not match the dataset size");
  std::map<std::string, std::size_t> variant_index;
  SplitEvaluation out;
  for (const auto& v : config.variants) {
    if (!variant_index.emplace(v.name, out.variants.size()).second) {
      throw ConfigError("duplicate model variant '" + v.name + "'");
    }
    out.variants.push_back(v.name);
  }
  for (const auto& iv : config.integrated) {
    if (!variant_index.count(iv.imaging_variant) || !variant_index.count(iv.expression_variant)) {
      throw ConfigError("integrated variant '" + iv.name + "' refers to an unknown variant");
    }
    out.variants.push_back(iv.name);
  }
  const auto repeats = static_cast<std::size_t>(plan.n_repeats);
  out.values.assign(out.variants.size(), std::vector<double>(repeats, std::nan("")));
  out.repeat_failure.assign(repeats, "");

  parallel_for(repeats, config.threads, [&](std::size_t r) {
    const auto& train = plan.train[r];
    const auto& test = plan.test[r];
    try {
      std::vector<CoxFit> fits;
      std::vector<double> row(out.variants.size());
      const auto repeat_seed = derive_seed(plan.master_seed, r);
      for (std::size_t v = 0; v < config.variants.size(); ++v) {
        CvOptions cv = config.cv;
        cv.seed = derive_seed(repeat_seed, stream_id("cv") + v);
        cv.threads = 1;
        fits.push_back(fit_survival_variant(data, train, config.variants[v], cv, config.rule));
        const Eigen::VectorXd scores = risk_scores(fits.back(), data, test);
        row[v] = c_index(std::span(scores.data(), test.size()), data.subset(test).records);
      }
      for (std::size_t k = 0; k < config.integrated.size(); ++k) {
        const auto& iv = config.integrated[k];
        const auto& fi = fits[variant_index.at(iv.imaging_variant)];
        const auto& fe = fits[variant_index.at(iv.expression_variant)];
        const Dataset train_data = data.subset(train);
        const SignaturePair pair{signature_rows(fi, data, train), signature_rows(fe, data, train)};
        const auto integrated =
            fit_integrated_cox(pair, clinical_rows(data, iv.clinical_block, train), train_data.records);

        const Eigen::VectorXd si = signature_rows(fi, data, test);
        const Eigen::VectorXd se = signature_rows(fe, data, test);
        const auto clinical = clinical_rows(data, iv.clinical_block, test);
        Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.size()));
        for (const auto& w : integrated.wald) {
          if (w.term == kImagingSignature) {
            scores += w.coefficient * si;
          } else if (w.term == kExpressionSignature) {
            scores += w.coefficient * se;
          } else {
            const auto col = clinical.column_index(w.term);
            for (std::size_t i = 0; i < test.size(); ++i) {
              scores(static_cast<Eigen::Index>(i)) += w.coefficient * clinical.values(static_cast<Eigen::Index>(i), col);
            }
          }
        }
        row[config.variants.size() + k] =
            c_index(std::span(scores.data(), test.size()), data.subset(test).records);
      }
      for (std::size_t v = 0; v < row.size(); ++v) out.values[v][r] = row[v];
    } catch (const std::exception& e) {
      out.repeat_failure[r] = e.what();
    }
  });

  check_min_success(out.failed_repeats(), plan.n_repeats, config.min_success_fraction, out.repeat_failure);
  for (const auto& v : out.values) out.summaries.push_back(summarize(v));
  return out;
}

AssociationEvaluation evaluate_association(const Dataset& data, const AssociationConfig& config,
                                           const SplitPlan& plan) {
  if (plan.n != static_cast<int>(data.size())) throw ValidationError("split plan does not match the dataset size");
  const auto& xb = data.block(config.imaging_block);
  const auto& zb = data.block(config.expression_block);
  const auto p = xb.cols();
  const auto repeats = static_cast<std::size_t>(plan.n_repeats);

  AssociationEvaluation out;
  out.features = xb.column_names;
  out.correlations.assign(static_cast<std::size_t>(p), std::vector<double>(repeats, std::nan("")));
  out.selected_genes.assign(repeats, 0);
  out.repeat_failure.assign(repeats, "");

  parallel_for(repeats, config.threads, [&](std::size_t r) {
    const auto& train = plan.train[r];
    const auto& test = plan.test[r];
    try {
      const Eigen::MatrixXd x_train = xb.values(train, Eigen::all);
      const Eigen::MatrixXd x_test = xb.values(test, Eigen::all);
      Eigen::MatrixXd z_train = zb.values(train, Eigen::all);
      Eigen::MatrixXd z_test = zb.values(test, Eigen::all);
      // Standardize Z with training statistics; genes constant on the
      // training rows carry no information and are zeroed.
      const auto s = column_scaling(z_train);
      for (Eigen::Index j = 0; j < z_train.cols(); ++j) {
        if (s.scale(j) > 0.0) {
          z_train.col(j) = (z_train.col(j).array() - s.mean(j)) / s.scale(j);
          z_test.col(j) = (z_test.col(j).array() - s.mean(j)) / s.scale(j);
        } else {
          z_train.col(j).setZero();
          z_test.col(j).setZero();
        }
      }
      GroupCvOptions cv = config.cv;
      cv.seed = derive_seed(derive_seed(plan.master_seed, r), stream_id("group-cv"));
      cv.threads = 1;
      const auto selection = cross_validate_groups_with_path(x_train, z_train, cv);
      const auto& fit = selection.fit(config.rule);
      out.selected_genes[r] = static_cast<int>(fit.selected_genes.size());
      const Eigen::MatrixXd predicted = predict_imaging(fit, z_test);
      for (Eigen::Index f = 0; f < p; ++f) {
        const auto c = pearson_correlation(std::span(predicted.col(f).data(), test.size()),
                                           std::span(x_test.col(f).data(), test.size()));
        out.correlations[static_cast<std::size_t>(f)][r] = c.value;
      }
    } catch (const std::exception& e) {
      out.repeat_failure[r] = e.what();
    }
  });

  const int failed = static_cast<int>(std::count_if(out.repeat_failure.begin(), out.repeat_failure.end(),
                                                    [](const std::string& s) { return !s.empty(); }));
  check_min_success(failed, plan.n_repeats, config.min_success_fraction, out.repeat_failure);

  for (std::size_t f = 0; f < static_cast<std::size_t>(p); ++f) {
    const auto s = summarize(out.correlations[f]);
    out.mean.push_back(s.mean);
    out.sd.push_back(s.sd);
    out.defined.push_back(s.count);
    out.excluded.push_back(plan.n_repeats - failed - s.count);
  }
  out.sorted.resize(static_cast<std::size_t>(p));
  std::iota(out.sorted.begin(), out.sorted.end(), std::size_t{0});
  std::stable_sort(out.sorted.begin(), out.sorted.end(), [&](std::size_t a, std::size_t b) {
    const bool da = std::isfinite(out.mean[a]);
    const bool db = std::isfinite(out.mean[b]);
    if (da != db) return da;
    return da && out.mean[a] < out.mean[b];
  });
  return out;
}

}  // namespace hdsurv
