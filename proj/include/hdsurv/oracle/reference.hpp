#pragma once

// Slow, direct implementations of the quantities the solvers compute. They
// share no code with the library's numerical routines and exist only to
// check them (test suites and the `check` command).

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>

#include "hdsurv/rng.hpp"

namespace hdsurv::oracle {

/// Breslow log partial likelihood by a double loop over events and subjects.
double naive_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                            const Eigen::VectorXd& beta);

/// dl/dbeta by a double loop.
Eigen::VectorXd naive_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                               const Eigen::VectorXd& beta);

/// Central differences with step h * max(1, |beta_l|).
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& beta, double h = 1e-5);

/// Breslow log partial likelihood with subjects pre-sorted by decreasing time:
/// a cheap evaluator for grid searches.
class SortedLikelihood {
 public:
  SortedLikelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event);
  double operator()(const Eigen::VectorXd& beta) const;

 private:
  Eigen::MatrixXd x_;                 // rows in decreasing time order
  std::vector<std::size_t> group_end_;  // exclusive end of each tied-time group
  Eigen::VectorXi event_;
};

struct GridSearchResult {
  Eigen::VectorXd beta;
  double objective = 0.0;
};

/**
 * Minimizes -l(beta) + tau * sum(pf |beta|) over [-bound, bound]^p on a
 * coarse-to-fine lattice: step 0.1 over the box, then step 0.01 within +-0.2 of
 * the best point, then step 0.001 within +-0.02. Lattice points are integer
 * multiples of the step, so 0 is always a candidate. Relies on convexity of
 * the objective.
 */
GridSearchResult lasso_grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                                   const Eigen::VectorXd& penalty_factors, double tau, double bound = 2.0);

/// Counts in half units, by the O(n^2) definition.
struct BruteConcordance {
  std::int64_t concordant_halves = 0;
  std::int64_t comparable = 0;
};
BruteConcordance brute_force_concordance(std::span<const double> scores, std::span<const double> time,
                                         std::span<const int> event);

/// Pearson correlation from the textbook formula.
double naive_pearson(std::span<const double> a, std::span<const double> b);

/// Least squares of X on [1, Z] by normal equations; returns eta (p x q).
Eigen::MatrixXd least_squares_eta(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z);

/// Group-Lasso KKT residual computed from (eta, intercepts) and raw data:
/// stationarity per gene column and of the intercepts.
double group_kkt_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const Eigen::MatrixXd& eta,
                        const Eigen::VectorXd& intercepts, double tau);

/// Lasso-Cox KKT residual from the double-loop gradient, on the design the
/// coefficients refer to.
double lasso_kkt_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                        const Eigen::VectorXd& beta, double tau, const Eigen::VectorXd& penalty_factors);

/// Random survival instance with independent normal covariates, exponential
/// event times and uniform censoring at roughly the requested fraction.
struct Instance {
  Eigen::MatrixXd x;
  Eigen::VectorXd time;
  Eigen::VectorXi event;
};
Instance random_instance(Rng& rng, int n, int p, double censoring, double effect_scale = 0.5,
                         bool tied_times = false);

}  // namespace hdsurv::oracle
