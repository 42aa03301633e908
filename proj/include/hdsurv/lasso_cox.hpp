#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hdsurv/cox.hpp"

namespace hdsurv {

/// sign(z) * max(|z| - lambda, 0).
inline double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

struct LassoOptions {
  double coefficient_tolerance = 1e-7;  // max |change| between outer iterations
  double kkt_tolerance = 1e-4;
  double inner_tolerance = 1e-10;       // coordinate descent on the quadratic model
  int max_sweeps = 10000;               // coordinate sweeps over all outer iterations
};

/// Largest violation of the Lasso optimality conditions at `beta` (solver scale):
/// |g_l - tau*pf_l*sign(b_l)| for active penalized l, max(|g_l| - tau*pf_l, 0)
/// for zero penalized l, and |g_l| for unpenalized l.
double kkt_residual(const Eigen::VectorXd& gradient, const Eigen::VectorXd& beta, double tau,
                    const Eigen::VectorXd& penalty_factors);

/// Smallest tau at which every penalized coefficient is zero: the unpenalized
/// columns are fitted first, then tau_max = max_l |dl/dbeta_l| / pf_l over
/// penalized columns at that fit.
double compute_tau_max(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors);

/**
 * Maximizes l(beta) - tau * sum_l pf_l |beta_l|.
 *
 * Outer iterations form a second-order expansion of l and minimize it plus
 * the penalty by cyclic coordinate descent with an active set. When the design
 * has no more columns than rows the expansion uses the exact Hessian (columns
 * computed on demand); otherwise it uses the diagonal per-subject weights in
 * the linear predictor. A candidate that raises the penalized objective is
 * pulled back toward the previous iterate by step halving. `warm_start` is on
 * the solver scale.
 */
CoxFit fit_lasso_cox(const CoxProblem& problem, double tau, const Eigen::VectorXd& penalty_factors,
                     const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                     const LassoOptions& options = {});

struct RegularizationPath {
  std::vector<double> tau_grid;  // strictly decreasing
  std::vector<CoxFit> fits;
  double tau_max = 0.0;
};

/// grid_size points, log-spaced from tau_max down to ratio * tau_max.
std::vector<double> log_spaced_grid(double tau_max, int grid_size, double ratio);

struct PathOptions {
  int grid_size = 100;
  double ratio = 0.01;
  LassoOptions lasso;
};

RegularizationPath fit_path(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors,
                            const PathOptions& options = {});

/// Warm-started fits along an explicit decreasing grid.
RegularizationPath fit_path_on_grid(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors,
                                    std::span<const double> grid, const LassoOptions& options = {});

enum class SelectionRule { Min, OneStandardError };

struct CvResult {
  std::vector<double> tau_grid;
  std::vector<double> cv_mean;
  std::vector<double> cv_sd;  // across folds
  std::size_t index_min = 0;
  std::size_t index_1se = 0;
  double tau_min = 0.0;
  double tau_1se = 0.0;
  std::uint64_t seed = 0;
  int folds = 0;
  std::vector<int> fold_of;  // fold id per subject

  std::size_t index(SelectionRule rule) const { return rule == SelectionRule::Min ? index_min : index_1se; }
};

struct CvOptions {
  int folds = 10;
  int grid_size = 100;
  double ratio = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
  LassoOptions lasso;
  std::vector<double> grid;  // explicit grid; computed from the full data when empty
};

/// Fold ids with events and censored subjects each dealt round-robin after a
/// seeded shuffle: fold sizes and per-fold event counts differ by at most 1.
std::vector<int> stratified_folds(const Eigen::VectorXi& event, int folds, std::uint64_t seed);

/**
 * K-fold cross-validated partial-likelihood deviance.
 *
 * For fold k with training fit b, the criterion is
 * -2 * (l_full(b) - l_train(b)). Fold fits use tau * n_train / n so the
 * penalty keeps the same weight relative to the (unnormalized) likelihood.
 */
CvResult cross_validate(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors,
                        const CvOptions& options = {});

struct CvSelection {
  CvResult cv;
  RegularizationPath path;  // full-data path on cv.tau_grid

  const CoxFit& fit(SelectionRule rule) const { return path.fits[cv.index(rule)]; }
};

CvSelection cross_validate_with_path(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors,
                                     const CvOptions& options = {});

/// Index of the minimum mean and of the largest tau within one standard error of it.
void select_indices(CvResult& cv);

}  // namespace hdsurv
