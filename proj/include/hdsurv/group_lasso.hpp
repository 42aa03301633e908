#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "hdsurv/lasso_cox.hpp"

namespace hdsurv {

/// Multi-response regression X ~ intercepts + eta * Z with one group per gene
/// (a column of eta holds that gene's coefficients for every imaging feature).
struct GroupLassoFit {
  Eigen::MatrixXd eta;          // p x q: rows imaging features, columns genes
  Eigen::VectorXd intercepts;   // p
  double tau = 0.0;
  std::vector<int> selected_genes;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // after each block sweep

  Eigen::Index nonzero_entries() const { return static_cast<Eigen::Index>((eta.array() != 0.0).count()); }
};

/// Zero if ||v|| <= lambda, otherwise v * (1 - lambda / ||v||).
Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double lambda);

struct GroupLassoOptions {
  double coefficient_tolerance = 1e-8;
  double kkt_tolerance = 1e-4;
  int max_sweeps = 10000;
};

/// max_j 2 * ||Zc_j' Xc|| with both matrices column-centered.
double compute_tau_max_groups(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z);

/**
 * Minimizes sum_i ||X_i - a - eta Z_i||^2 + tau * sum_j ||eta_{.j}||.
 *
 * Both matrices are centered internally, which profiles out the intercept a;
 * Z is expected to be standardized by the caller. Block coordinate descent
 * runs on the Gram matrices Z'Z and Z'X, so a sweep costs O(q^2 p)
 * independent of n. `warm_start` is a p x q coefficient matrix.
 */
GroupLassoFit fit_group_lasso(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double tau,
                              const std::optional<Eigen::MatrixXd>& warm_start = std::nullopt,
                              const GroupLassoOptions& options = {});

/// Warm-started fits on a decreasing grid.
std::vector<GroupLassoFit> fit_group_path(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                          std::span<const double> grid, const GroupLassoOptions& options = {});

/// intercepts + Z_new * eta', one row per subject.
Eigen::MatrixXd predict_imaging(const GroupLassoFit& fit, const Eigen::MatrixXd& z_new);

/// Largest violation of the group optimality conditions at `fit` for (x, z).
double group_kkt_residual(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupLassoFit& fit);

/// Objective value sum ||X_i - a - eta Z_i||^2 + tau * sum_j ||eta_j|| at the fit.
double group_lasso_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupLassoFit& fit);

struct GroupCvOptions {
  int folds = 10;
  int grid_size = 100;
  double ratio = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
  GroupLassoOptions solver;
  std::vector<double> grid;
};

/// Seeded shuffle, then round-robin fold ids (sizes differ by at most 1).
std::vector<int> random_folds(Eigen::Index n, int folds, std::uint64_t seed);

struct GroupCvSelection {
  CvResult cv;
  std::vector<GroupLassoFit> path;  // full-data fits on cv.tau_grid

  const GroupLassoFit& fit(SelectionRule rule) const { return path[cv.index(rule)]; }
};

/// Held-out sum of squared prediction errors over all imaging features.
/// Fold fits use tau * n_train / n.
GroupCvSelection cross_validate_groups_with_path(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                                 const GroupCvOptions& options = {});

CvResult cross_validate_groups(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupCvOptions& options = {});

}  // namespace hdsurv
