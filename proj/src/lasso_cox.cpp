#include "hdsurv/lasso_cox.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hdsurv/errors.hpp"
#include "hdsurv/parallel.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {

double kkt_residual(const Eigen::VectorXd& gradient, const Eigen::VectorXd& beta, double tau,
                    const Eigen::VectorXd& penalty_factors) {
  double worst = 0.0;
  for (Eigen::Index l = 0; l < beta.size(); ++l) {
    const double bound = tau * penalty_factors(l);
    double r;
    if (penalty_factors(l) == 0.0) {
      r = std::abs(gradient(l));
    } else if (beta(l) != 0.0) {
      r = std::abs(gradient(l) - bound * (beta(l) > 0.0 ? 1.0 : -1.0));
    } else {
      r = std::max(std::abs(gradient(l)) - bound, 0.0);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

std::vector<Eigen::Index> unpenalized_columns(const Eigen::VectorXd& pf) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index l = 0; l < pf.size(); ++l) {
    if (pf(l) == 0.0) cols.push_back(l);
  }
  return cols;
}

// Unpenalized columns at their partial-likelihood optimum, penalized at zero.
Eigen::VectorXd null_model(const CoxProblem& problem, const Eigen::VectorXd& pf) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(problem.p());
  const auto cols = unpenalized_columns(pf);
  if (cols.empty()) return beta;
  const auto fit = newton_fit(problem, cols);
  if (!fit.converged) throw NumericalError("fit on unpenalized columns did not converge");
  for (std::size_t c = 0; c < cols.size(); ++c) beta(cols[c]) = fit.solver_coefficients(static_cast<Eigen::Index>(c));
  return beta;
}

double penalty(const Eigen::VectorXd& beta, double tau, const Eigen::VectorXd& pf) {
  return tau * (pf.array() * beta.array().abs()).sum();
}

CoxFit make_fit(const CoxProblem& problem, const Eigen::VectorXd& beta, double tau, const Eigen::VectorXd& pf) {
  CoxFit fit;
  fit.names = problem.names();
  fit.solver_coefficients = beta;
  fit.coefficients = problem.original_scale(beta);
  fit.penalty_factors = pf;
  fit.tau = tau;
  return fit;
}

void check_penalty_factors(const CoxProblem& problem, const Eigen::VectorXd& pf) {
  if (pf.size() != problem.p()) throw ValidationError("penalty factor count does not match design width");
  if ((pf.array() < 0.0).any()) throw ValidationError("penalty factors must be nonnegative");
}

}  // namespace

double compute_tau_max(const CoxProblem& problem, const Eigen::VectorXd& penalty_factors) {
  check_penalty_factors(problem, penalty_factors);
  if ((penalty_factors.array() > 0.0).count() == 0) throw ValidationError("no penalized columns");
  if (problem.events() == 0) throw NumericalError("partial likelihood undefined with zero events");
  const auto beta0 = null_model(problem, penalty_factors);
  const auto g = gradient(problem, beta0);
  double tau_max = 0.0;
  for (Eigen::Index l = 0; l < g.size(); ++l) {
    if (penalty_factors(l) > 0.0) tau_max = std::max(tau_max, std::abs(g(l)) / penalty_factors(l));
  }
  return tau_max;
}

CoxFit fit_lasso_cox(const CoxProblem& problem, double tau, const Eigen::VectorXd& pf,
                     const std::optional<Eigen::VectorXd>& warm_start, const LassoOptions& options) {
  check_penalty_factors(problem, pf);
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (problem.events() == 0) throw NumericalError("partial likelihood undefined with zero events");

  const auto& x = problem.design();
  const auto n = problem.n();
  const auto d = problem.p();
  const auto& risk_sets = problem.risk_sets();
  const auto& event = problem.event();

  Eigen::VectorXd beta;
  if (warm_start) {
    if (warm_start->size() != d) throw ValidationError("warm start length does not match design width");
    beta = *warm_start;
  } else {
    beta = null_model(problem, pf);
  }

  Eigen::VectorXd eta = x * beta;
  CoxFit fit = make_fit(problem, beta, tau, pf);
  int sweeps = 0;
  double last_change = std::numeric_limits<double>::infinity();
  Eigen::VectorXd h(d);
  Eigen::MatrixXd wx(n, d);  // weighted design, refreshed every outer iteration
  Eigen::MatrixXd gram, means, weighted_means;
  Eigen::VectorXd event_counts;
  std::vector<char> have_column;

  for (int outer = 0;; ++outer) {
    const auto deriv = eta_derivatives(risk_sets, event, eta);
    const Eigen::VectorXd grad = x.transpose() * deriv.score;
    const double objective = -deriv.log_likelihood + penalty(beta, tau, pf);
    fit.objective_trace.push_back(objective);
    const double kkt = kkt_residual(grad, beta, tau, pf);
    fit.kkt_residual = kkt;
    fit.log_partial_likelihood = deriv.log_likelihood;
    fit.iterations = outer;

    // The starting point is accepted as is only when it is optimal to well
    // within tolerance (e.g. the null model at tau >= tau_max).
    const bool done = outer == 0 ? kkt <= 1e-3 * options.kkt_tolerance
                                 : kkt < options.kkt_tolerance && last_change < options.coefficient_tolerance;
    if (done) {
      fit.converged = true;
      break;
    }
    if (sweeps >= options.max_sweeps) {
      fit.diagnostics = "coordinate descent reached the sweep limit";
      break;
    }

    // With at least as many subjects as columns, the quadratic model uses the
    // exact Hessian X'AX - sum_t d_t m_t m_t' (A = diag of event - score, m_t
    // the exp(eta)-weighted risk-set mean of x), with columns filled lazily and
    // c = gradient - H (next - beta). Otherwise it is the diagonal-weight
    // least-squares model on the n-vector of working residuals.
    const bool covariance = d <= n;
    Eigen::VectorXd resid, c;
    if (covariance) {
      const Eigen::VectorXd a = event.cast<double>() - deriv.score;
      wx = x.array().colwise() * a.array();
      const auto& order = risk_sets.order();
      const auto& groups = risk_sets.groups();
      std::size_t event_groups = 0;
      for (const auto& g : groups) event_groups += g.events > 0 ? 1 : 0;
      means.resize(static_cast<Eigen::Index>(event_groups), d);
      event_counts.resize(static_cast<Eigen::Index>(event_groups));
      const double shift = eta.maxCoeff();
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d);
      double s0 = 0.0;
      Eigen::Index row = static_cast<Eigen::Index>(event_groups);
      for (std::size_t g = groups.size(); g-- > 0;) {
        for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) {
          const auto i = order[static_cast<std::size_t>(pos)];
          const double e = std::exp(eta(i) - shift);
          s0 += e;
          s1.noalias() += e * x.row(i).transpose();
        }
        if (groups[g].events > 0) {
          --row;
          means.row(row) = (s1 / s0).transpose();
          event_counts(row) = groups[g].events;
        }
      }
      weighted_means = means.array().colwise() * event_counts.array();
      for (Eigen::Index l = 0; l < d; ++l) h(l) = wx.col(l).dot(x.col(l)) - weighted_means.col(l).dot(means.col(l));
      c = grad;
      gram.resize(d, d);
      have_column.assign(static_cast<std::size_t>(d), 0);
    } else {
      const Eigen::VectorXd& w = deriv.weight;
      resid.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) resid(i) = w(i) > 0.0 ? deriv.score(i) / w(i) : 0.0;
      wx = x.array().colwise() * w.array();
      for (Eigen::Index l = 0; l < d; ++l) h(l) = wx.col(l).dot(x.col(l));
    }

    Eigen::VectorXd next = beta;
    auto update = [&](Eigen::Index l) {
      if (!(h(l) > 0.0)) return 0.0;
      const double z = (covariance ? c(l) : wx.col(l).dot(resid)) + h(l) * next(l);
      const double nb = (pf(l) > 0.0 ? soft_threshold(z, tau * pf(l)) : z) / h(l);
      const double delta = nb - next(l);
      if (delta != 0.0) {
        if (covariance) {
          if (!have_column[static_cast<std::size_t>(l)]) {
            gram.col(l).noalias() = wx.transpose() * x.col(l);
            gram.col(l).noalias() -= means.transpose() * weighted_means.col(l);
            have_column[static_cast<std::size_t>(l)] = 1;
          }
          c.noalias() -= delta * gram.col(l);
        } else {
          resid.noalias() -= delta * x.col(l);
        }
        next(l) = nb;
      }
      return std::abs(delta);
    };

    // Sweeps on the diagonal model cost O(n) per coordinate, so it is solved
    // only as accurately as the outer iterates are currently moving.
    const double inner_tolerance =
        covariance ? options.inner_tolerance : std::clamp(1e-2 * last_change, options.inner_tolerance, 1e-4);
    std::vector<Eigen::Index> active;
    for (;;) {
      // Full sweep over all coordinates.
      double full_change = 0.0;
      for (Eigen::Index l = 0; l < d; ++l) full_change = std::max(full_change, update(l));
      ++sweeps;
      if (full_change < inner_tolerance || sweeps >= options.max_sweeps) break;
      active.clear();
      for (Eigen::Index l = 0; l < d; ++l) {
        if (next(l) != 0.0 || pf(l) == 0.0) active.push_back(l);
      }
      // Iterate on the active set until it settles.
      while (sweeps < options.max_sweeps) {
        double change = 0.0;
        for (auto l : active) change = std::max(change, update(l));
        ++sweeps;
        if (change < inner_tolerance) break;
      }
    }

    // Objective guard: halve the step while the penalized loss goes up.
    Eigen::VectorXd candidate = next;
    Eigen::VectorXd candidate_eta = x * candidate;
    double candidate_objective =
        -log_partial_likelihood_eta(risk_sets, event, candidate_eta) + penalty(candidate, tau, pf);
    int halvings = 0;
    while (!(candidate_objective <= objective + 1e-12 * std::abs(objective)) && halvings < 40) {
      candidate = 0.5 * (beta + candidate);
      candidate_eta = x * candidate;
      candidate_objective = -log_partial_likelihood_eta(risk_sets, event, candidate_eta) + penalty(candidate, tau, pf);
      ++halvings;
    }
    if (!(candidate_objective <= objective + 1e-12 * std::abs(objective))) {
      // No descent possible at working precision.
      fit.converged = kkt < options.kkt_tolerance;
      if (!fit.converged) fit.diagnostics = "step halving failed to decrease the penalized objective";
      break;
    }
    last_change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = std::move(candidate);
    eta = std::move(candidate_eta);
  }

  fit.solver_coefficients = beta;
  fit.coefficients = problem.original_scale(beta);
  return fit;
}

std::vector<double> log_spaced_grid(double tau_max, int grid_size, double ratio) {
  if (grid_size < 1) throw ValidationError("grid size must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("grid ratio must lie in (0, 1)");
  if (!(tau_max > 0.0)) throw NumericalError("tau_max is zero: no penalized column has a nonzero score");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  const double log_hi = std::log(tau_max);
  const double log_lo = std::log(ratio * tau_max);
  for (int k = 0; k < grid_size; ++k) {
    grid[static_cast<std::size_t>(k)] =
        grid_size == 1 ? tau_max : std::exp(log_hi + (log_lo - log_hi) * k / (grid_size - 1));
  }
  grid.front() = tau_max;
  return grid;
}

RegularizationPath fit_path_on_grid(const CoxProblem& problem, const Eigen::VectorXd& pf, std::span<const double> grid,
                                    const LassoOptions& options) {
  RegularizationPath path;
  path.tau_grid.assign(grid.begin(), grid.end());
  path.tau_max = grid.empty() ? 0.0 : grid.front();
  std::optional<Eigen::VectorXd> warm;
  for (double tau : grid) {
    try {
      path.fits.push_back(fit_lasso_cox(problem, tau, pf, warm, options));
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "path fit failed at tau=" << tau << ": " << e.what();
      throw NumericalError(msg.str());
    }
    warm = path.fits.back().solver_coefficients;
  }
  return path;
}

RegularizationPath fit_path(const CoxProblem& problem, const Eigen::VectorXd& pf, const PathOptions& options) {
  const double tau_max = compute_tau_max(problem, pf);
  const auto grid = log_spaced_grid(tau_max, options.grid_size, options.ratio);
  auto path = fit_path_on_grid(problem, pf, grid, options.lasso);
  path.tau_max = tau_max;
  return path;
}

std::vector<int> stratified_folds(const Eigen::VectorXi& event, int folds, std::uint64_t seed) {
  std::vector<int> events, censored;
  for (Eigen::Index i = 0; i < event.size(); ++i) (event(i) ? events : censored).push_back(static_cast<int>(i));
  Rng rng(seed);
  rng.shuffle(std::span(events));
  rng.shuffle(std::span(censored));
  std::vector<int> fold_of(static_cast<std::size_t>(event.size()));
  std::size_t pos = 0;
  for (int i : events) fold_of[static_cast<std::size_t>(i)] = static_cast<int>(pos++ % static_cast<std::size_t>(folds));
  for (int i : censored) fold_of[static_cast<std::size_t>(i)] = static_cast<int>(pos++ % static_cast<std::size_t>(folds));
  return fold_of;
}

void select_indices(CvResult& cv) {
  const auto& mean = cv.cv_mean;
  std::size_t best = 0;
  for (std::size_t t = 1; t < mean.size(); ++t) {
    if (mean[t] < mean[best]) best = t;
  }
  const double se = cv.cv_sd[best] / std::sqrt(static_cast<double>(cv.folds));
  std::size_t one_se = best;
  for (std::size_t t = 0; t <= best; ++t) {
    if (mean[t] <= mean[best] + se) {
      one_se = t;
      break;
    }
  }
  cv.index_min = best;
  cv.index_1se = one_se;
  cv.tau_min = cv.tau_grid[best];
  cv.tau_1se = cv.tau_grid[one_se];
}

CvSelection cross_validate_with_path(const CoxProblem& problem, const Eigen::VectorXd& pf, const CvOptions& options) {
  if (options.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (options.folds > problem.n()) throw ValidationError("more folds than subjects");
  CvSelection out;
  auto& cv = out.cv;
  cv.folds = options.folds;
  cv.tau_grid = options.grid.empty()
                    ? log_spaced_grid(compute_tau_max(problem, pf), options.grid_size, options.ratio)
                    : options.grid;

  // Every training fold must contain events; re-draw once before giving up.
  auto training_has_events = [&](const std::vector<int>& fold_of) {
    std::vector<int> test_events(static_cast<std::size_t>(options.folds), 0);
    for (Eigen::Index i = 0; i < problem.n(); ++i) test_events[static_cast<std::size_t>(fold_of[static_cast<std::size_t>(i)])] += problem.event()(i);
    return std::all_of(test_events.begin(), test_events.end(), [&](int e) { return problem.events() - e > 0; });
  };
  cv.seed = options.seed;
  cv.fold_of = stratified_folds(problem.event(), options.folds, cv.seed);
  if (!training_has_events(cv.fold_of)) {
    cv.seed = derive_seed(options.seed, 1);
    cv.fold_of = stratified_folds(problem.event(), options.folds, cv.seed);
    if (!training_has_events(cv.fold_of)) throw NumericalError("a cross-validation training fold has no events");
  }

  const auto grid_len = cv.tau_grid.size();
  std::vector<std::vector<double>> deviance(static_cast<std::size_t>(options.folds));
  auto run_fold = [&](std::size_t k) {
    std::vector<int> train;
    for (Eigen::Index i = 0; i < problem.n(); ++i) {
      if (cv.fold_of[static_cast<std::size_t>(i)] != static_cast<int>(k)) train.push_back(static_cast<int>(i));
    }
    const auto sub = problem.subset(train);
    const double share = static_cast<double>(train.size()) / static_cast<double>(problem.n());
    std::vector<double> grid(grid_len);
    for (std::size_t t = 0; t < grid_len; ++t) grid[t] = cv.tau_grid[t] * share;
    const auto path = fit_path_on_grid(sub, pf, grid, options.lasso);
    auto& dev = deviance[k];
    dev.resize(grid_len);
    for (std::size_t t = 0; t < grid_len; ++t) {
      const auto& b = path.fits[t].solver_coefficients;
      dev[t] = -2.0 * (log_partial_likelihood(problem, b) - log_partial_likelihood(sub, b));
    }
  };
  // The full-data path runs as one more work item alongside the folds.
  parallel_for(static_cast<std::size_t>(options.folds) + 1, options.threads, [&](std::size_t k) {
    if (k == static_cast<std::size_t>(options.folds)) {
      out.path = fit_path_on_grid(problem, pf, cv.tau_grid, options.lasso);
    } else {
      run_fold(k);
    }
  });
  out.path.tau_max = cv.tau_grid.front();

  cv.cv_mean.assign(grid_len, 0.0);
  cv.cv_sd.assign(grid_len, 0.0);
  const double k_folds = options.folds;
  for (std::size_t t = 0; t < grid_len; ++t) {
    double sum = 0.0;
    for (const auto& dev : deviance) sum += dev[t];
    const double mean = sum / k_folds;
    double ss = 0.0;
    for (const auto& dev : deviance) ss += (dev[t] - mean) * (dev[t] - mean);
    cv.cv_mean[t] = mean;
    cv.cv_sd[t] = std::sqrt(ss / (k_folds - 1.0));
  }
  select_indices(cv);
  return out;
}

CvResult cross_validate(const CoxProblem& problem, const Eigen::VectorXd& pf, const CvOptions& options) {
  return cross_validate_with_path(problem, pf, options).cv;
}

}  // namespace hdsurv
