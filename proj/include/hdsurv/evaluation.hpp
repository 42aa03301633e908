#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hdsurv/cox.hpp"
#include "hdsurv/group_lasso.hpp"
#include "hdsurv/lasso_cox.hpp"

namespace hdsurv {

// ---------------------------------------------------------------------------
// Concordance

/// Concordant mass in half units (2 per concordant pair, 1 per tied score)
/// and the number of comparable pairs.
struct ConcordanceCounts {
  std::int64_t concordant_halves = 0;
  std::int64_t comparable = 0;

  double value() const { return (static_cast<double>(concordant_halves) / 2.0) / static_cast<double>(comparable); }
};

/**
 * Harrell's C over comparable pairs: i had an event and either U_i < U_j, or
 * U_i == U_j with j censored. Higher score means higher risk; a pair is
 * concordant when score_i > score_j and counts 1/2 when the scores tie.
 * O(n log n) with a Fenwick tree over score ranks.
 */
ConcordanceCounts concordance_counts(std::span<const double> scores, std::span<const double> time,
                                     std::span<const int> event);

/// Throws NumericalError("C-index undefined") when no pair is comparable.
double c_index(std::span<const double> scores, std::span<const double> time, std::span<const int> event);
double c_index(std::span<const double> scores, std::span<const SurvivalRecord> records);

// ---------------------------------------------------------------------------
// Correlation

struct CorrelationResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string undefined_reason;  // empty when defined

  bool defined() const { return undefined_reason.empty(); }
};

/// Pearson product-moment correlation; undefined (NaN plus reason) when either
/// input has zero variance.
CorrelationResult pearson_correlation(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Random-split protocol

struct SplitPlan {
  std::uint64_t master_seed = 0;
  int n = 0;
  int n_repeats = 100;
  double train_fraction = 0.75;
  std::vector<std::vector<int>> train;  // sorted subject indices, per repeat
  std::vector<std::vector<int>> test;
};

/// Repeat r draws a uniform permutation from the stream derive_seed(master_seed, r);
/// the first round(train_fraction * n) indices form the training set.
SplitPlan make_split_plan(int n, std::uint64_t master_seed, int n_repeats = 100, double train_fraction = 0.75);

struct MetricSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

/// Summary over the finite entries of `values` (sample standard deviation).
MetricSummary summarize(std::span<const double> values);

struct SplitEvaluation {
  std::vector<std::string> variants;
  std::vector<std::vector<double>> values;  // [variant][repeat]; NaN when the repeat failed
  std::vector<std::string> repeat_failure;  // empty string for successful repeats
  std::vector<MetricSummary> summaries;

  int failed_repeats() const;
};

/// A Cox model on the union of the named blocks; each column's penalty factor
/// comes from its block (clinical columns are unpenalized).
struct ModelVariant {
  std::string name;
  std::vector<std::string> blocks;
};

/// Additive model on two fitted signatures plus the clinical block.
struct IntegratedVariant {
  std::string name;
  std::string imaging_variant;
  std::string expression_variant;
  std::string clinical_block = "clinical";
};

struct SurvivalEvaluationConfig {
  std::vector<ModelVariant> variants;
  std::vector<IntegratedVariant> integrated;
  CvOptions cv;  // cv.seed is replaced per repeat and variant
  SelectionRule rule = SelectionRule::Min;
  int threads = 1;
  double min_success_fraction = 0.95;
};

/**
 * Fits one variant on the given training rows: standardization, cross-validation
 * and tau selection see only those rows. Columns that are constant on the
 * training rows are left out of the fit and reported with coefficient 0.
 * Variants without penalized columns are fitted by Newton-Raphson.
 */
CoxFit fit_survival_variant(const Dataset& data, std::span<const int> train_rows, const ModelVariant& variant,
                            const CvOptions& cv, SelectionRule rule);

/// Per repeat: fit every variant on the training split, score the test split,
/// compute the C-index. Repeats run in parallel; results depend only on the plan.
SplitEvaluation evaluate_survival_models(const Dataset& data, const SurvivalEvaluationConfig& config,
                                         const SplitPlan& plan);

struct AssociationConfig {
  std::string imaging_block = "imaging";
  std::string expression_block = "expression";
  GroupCvOptions cv;  // cv.seed is replaced per repeat
  SelectionRule rule = SelectionRule::Min;
  int threads = 1;
  double min_success_fraction = 0.95;
};

struct AssociationEvaluation {
  std::vector<std::string> features;
  std::vector<std::vector<double>> correlations;  // [feature][repeat]; NaN when undefined
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<int> defined;   // repeats contributing to mean/sd
  std::vector<int> excluded;  // repeats with undefined correlation
  std::vector<std::size_t> sorted;  // ascending mean, undefined means last
  std::vector<int> selected_genes;  // per repeat
  std::vector<std::string> repeat_failure;
};

/// Per repeat: group-Lasso fit on the training split (Z standardized with
/// training statistics, tau by CV inside the split), prediction of the test
/// imaging features, and one correlation per imaging feature.
AssociationEvaluation evaluate_association(const Dataset& data, const AssociationConfig& config, const SplitPlan& plan);

}  // namespace hdsurv
