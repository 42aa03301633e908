#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdsurv/data_model.hpp"

namespace hdsurv {

struct Effect {
  int index = 0;
  double value = 0.0;
};

struct LinkEffect {
  int feature = 0;  // imaging feature (row of eta)
  int gene = 0;     // expression gene (column of eta)
  double value = 0.0;
};

struct SimulationSpec {
  int n = 400;
  int p_imaging = 50;
  int q_expression = 0;  // 0 = no expression block
  std::vector<Effect> beta_imaging;
  std::vector<Effect> beta_expression;
  /// Effects on the encoded clinical columns (Sex, Age, Tumor_Size, Stage_Level_A, Stage_Level_B).
  std::vector<Effect> beta_clinical;
  bool clinical = true;

  /// Within-block compound symmetry: features in consecutive blocks of
  /// `block_size` share pairwise correlation rho.
  double rho = 0.0;
  int block_size = 10;

  /// When non-empty, imaging = Z * eta' + noise instead of an independent block.
  std::vector<LinkEffect> eta;
  /// Noise for linked imaging features: sd = sqrt(signal variance / snr), or
  /// noise_sd when snr <= 0. Features without a linked gene get unit noise.
  double snr = 0.0;
  double noise_sd = 1.0;

  double baseline_rate = 0.05;  // lambda_0, per month
  double censoring_target = 0.35;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  Eigen::VectorXd beta_imaging;
  Eigen::VectorXd beta_expression;
  Eigen::VectorXd beta_clinical;
  Eigen::MatrixXd eta;  // p x q
  double censoring_scale = 0.0;  // c in C = c * U(0, 1); +inf when nothing is censored
  double censoring_fraction = 0.0;
};

struct SimulatedData {
  Dataset dataset;
  std::vector<ClinicalRow> clinical_rows;
  GroundTruth truth;
};

/// Draws a synthetic cohort. Throws ValidationError for an invalid spec and
/// NumericalError when the censoring target cannot be met within 0.05.
SimulatedData simulate(const SimulationSpec& spec, std::uint64_t seed);

/// Writes survival.csv, imaging.csv, expression.csv, clinical.csv and
/// ground_truth.json (blocks that were not simulated are skipped).
void write_simulated(const SimulatedData& data, const std::filesystem::path& dir);

/// Names used for simulated columns and subjects.
std::string imaging_column(int j);
std::string expression_column(int j);
std::string subject_name(int i, int n);

}  // namespace hdsurv
