#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hdsurv {

/// One subject's observed time U = min(T, C) and event indicator delta = I(T <= C).
struct SurvivalRecord {
  std::string subject_id;
  double observed_time = 0.0;  // months, >= 0
  bool event = false;          // true: death observed, false: censored
};

/// Named n x d block of covariates. Missing cells are NaN until QC imputes them.
struct FeatureBlock {
  std::string name;
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;
  /// 1 = penalized, 0 = never penalized (clinical covariates).
  Eigen::VectorXd penalty_factor;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  /// Index of a column by name, or -1.
  Eigen::Index column_index(std::string_view column) const;

  FeatureBlock select_rows(std::span<const int> rows) const;
  FeatureBlock select_columns(std::span<const Eigen::Index> columns) const;

  /// Throws ValidationError if shapes or names are inconsistent.
  void validate() const;
};

/// Per-column (mean, scale) with standardized = (x - mean) / scale.
struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

struct Dataset {
  std::vector<SurvivalRecord> records;
  std::vector<FeatureBlock> blocks;
  /// Set by callers that standardize blocks in place, keyed by block name.
  std::map<std::string, ColumnScaling> standardization;

  Eigen::Index size() const { return static_cast<Eigen::Index>(records.size()); }
  bool has_block(std::string_view name) const;
  const FeatureBlock& block(std::string_view name) const;
  FeatureBlock& block(std::string_view name);

  Eigen::VectorXd times() const;
  Eigen::VectorXi events() const;
  int event_count() const;

  /// Rows in the given order; standardization metadata is not carried over.
  Dataset subset(std::span<const int> rows) const;
};

struct LoadReport {
  std::size_t rows_dropped = 0;
  /// Fraction of missing cells per column, per block, before QC.
  std::map<std::string, std::vector<double>> missing_fraction;
  std::vector<std::string> warnings;
};

struct LoadedDataset {
  Dataset dataset;
  LoadReport report;
};

/**
 * Reads survival, feature and (optionally) clinical CSV files and joins them
 * on subject id.
 *
 * Only subjects present in every file are kept; records are ordered by
 * subject id so the result does not depend on row order in the inputs.
 * Feature cells left empty (or NA) become NaN and are handled by
 * quality_control(). Penalty factors are 1 for feature blocks and 0 for the
 * clinical block.
 */
LoadedDataset load_dataset(const std::filesystem::path& survival_path,
                           const std::map<std::string, std::filesystem::path>& feature_paths,
                           const std::optional<std::filesystem::path>& clinical_path);

struct QcRemoval {
  std::string column;
  std::string reason;  // "missingness" or "low variance"
  double value = 0.0;  // missing fraction or variance
};

struct QcResult {
  FeatureBlock block;
  std::vector<QcRemoval> removed;
};

/// Drops columns with missing fraction > missing_threshold, mean-imputes the
/// rest, then drops columns whose population variance is <= variance_epsilon.
QcResult quality_control(const FeatureBlock& block, double missing_threshold = 0.25,
                         double variance_epsilon = 1e-12);

enum class StageLevel { A, B, C };

/// Maps a TCGA stage label ("Stage IA", "Stage IIIB", ...) to its combined level.
StageLevel stage_level(std::string_view stage_label);

struct ClinicalRow {
  std::string sex;  // "F"/"M" (also "female"/"male")
  double age = 0.0;
  std::string stage;
  double longest_dim = 0.0;
  double shortest_dim = 0.0;
};

/// Columns Sex, Age, Tumor_Size, Stage_Level_A, Stage_Level_B (Level C is the
/// reference). All penalty factors are 0.
FeatureBlock encode_clinical(std::span<const ClinicalRow> rows);

inline const std::vector<std::string>& clinical_column_names() {
  static const std::vector<std::string> names{"Sex", "Age", "Tumor_Size", "Stage_Level_A",
                                              "Stage_Level_B"};
  return names;
}

struct StandardizedBlock {
  FeatureBlock block;
  ColumnScaling scaling;
};

/// Centers each column and divides by its population standard deviation.
StandardizedBlock standardize(const FeatureBlock& block);

/// Column means and population standard deviations of a complete matrix.
ColumnScaling column_scaling(const Eigen::MatrixXd& values);

/// Maps standardized-scale coefficients back to the original scale:
/// coefficient = b / scale, with the shift -sum(b * mean / scale) returned in `offset`.
Eigen::VectorXd back_transform(const Eigen::VectorXd& standardized_coefficients,
                               const ColumnScaling& scaling, double* offset = nullptr);

}  // namespace hdsurv
