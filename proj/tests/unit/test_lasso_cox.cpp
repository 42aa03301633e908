#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/lasso_cox.hpp"
#include "hdsurv/oracle/reference.hpp"

using namespace hdsurv;
using hdsurv::testing::problem_of;

namespace {

double penalized_loss(const CoxProblem& p, const Eigen::VectorXd& beta, double tau, const Eigen::VectorXd& pf) {
  return -log_partial_likelihood(p, beta) + tau * (pf.array() * beta.array().abs()).sum();
}

}  // namespace

TEST_CASE("soft_threshold") {
  CHECK(soft_threshold(3.0, 1.0) == 2.0);
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(-3.0, 1.0) == -2.0);
  CHECK(soft_threshold(-1.0, 1.0) == 0.0);
}

TEST_CASE("tau_max") {
  Rng rng(101);
  SUBCASE("no unpenalized columns: max |gradient at 0|") {
    const auto inst = oracle::random_instance(rng, 50, 4, 0.3);
    const Eigen::VectorXd pf = Eigen::VectorXd::Ones(4);
    const auto g = oracle::naive_gradient(inst.x, inst.time, inst.event, Eigen::VectorXd::Zero(4));
    CHECK(compute_tau_max(problem_of(inst, pf), pf) == doctest::Approx(g.cwiseAbs().maxCoeff()).epsilon(1e-12));
  }
  SUBCASE("just above tau_max every penalized coefficient is zero and unpenalized ones match Newton") {
    const auto inst = oracle::random_instance(rng, 60, 5, 0.3);
    Eigen::VectorXd pf = Eigen::VectorXd::Ones(5);
    pf(4) = 0.0;
    const auto problem = problem_of(inst, pf);
    const double tau_max = compute_tau_max(problem, pf);
    const auto fit = fit_lasso_cox(problem, 1.001 * tau_max, pf);
    CHECK(fit.nonzero_penalized() == 0);
    const std::vector<Eigen::Index> cols{4};
    const auto newton = newton_fit(problem, cols);
    CHECK(std::abs(fit.coefficients(4) - newton.coefficients(0)) <= 1e-6);
  }
  SUBCASE("agrees with a bisection on the solver's own zero pattern") {
    for (int k = 0; k < 5; ++k) {
      const auto inst = oracle::random_instance(rng, 30, 4, 0.3);
      const Eigen::VectorXd pf = Eigen::VectorXd::Ones(4);
      const auto problem = problem_of(inst, pf);
      const double tau_max = compute_tau_max(problem, pf);
      // Smallest tau on a fine grid with an all-zero solution.
      double lo = 0.0, hi = 2.0 * tau_max;
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (fit_lasso_cox(problem, mid, pf).nonzero_penalized() == 0 ? hi : lo) = mid;
      }
      CHECK(std::abs(hi - tau_max) <= 1e-3 * tau_max);
    }
  }
  SUBCASE("errors") {
    const auto inst = oracle::random_instance(rng, 20, 2, 0.3);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(compute_tau_max(problem_of(inst, zero), zero), ValidationError);
  }
}

TEST_CASE("fit_lasso_cox KKT conditions from the oracle gradient") {
  Rng rng(103);
  for (int k = 0; k < 10; ++k) {
    const auto inst = oracle::random_instance(rng, 80, 10, 0.35, 0.4);
    Eigen::VectorXd pf = Eigen::VectorXd::Ones(10);
    pf(0) = 0.0;
    const auto problem = problem_of(inst, pf);
    const double tau_max = compute_tau_max(problem, pf);
    for (double frac : {0.7, 0.3, 0.05}) {
      const auto fit = fit_lasso_cox(problem, frac * tau_max, pf);
      REQUIRE(fit.converged);
      CHECK(oracle::lasso_kkt_oracle(inst.x, inst.time, inst.event, fit.coefficients, fit.tau, pf) <= 1e-4);
    }
  }
}

TEST_CASE("objective is non-increasing across outer iterations") {
  Rng rng(107);
  for (int k = 0; k < 10; ++k) {
    const auto inst = oracle::random_instance(rng, 60, 12, 0.3, 1.0);
    const Eigen::VectorXd pf = Eigen::VectorXd::Ones(12);
    const auto problem = problem_of(inst, pf);
    const auto fit = fit_lasso_cox(problem, 0.05 * compute_tau_max(problem, pf), pf);
    for (std::size_t t = 1; t < fit.objective_trace.size(); ++t) {
      CHECK(fit.objective_trace[t] <= fit.objective_trace[t - 1] + 1e-12 * std::abs(fit.objective_trace[t - 1]));
    }
    CHECK(fit.objective_trace.back() == doctest::Approx(penalized_loss(problem, fit.solver_coefficients, fit.tau, pf)));
  }
}

TEST_CASE("tiny tau reproduces the unpenalized fit") {
  Rng rng(109);
  for (int k = 0; k < 5; ++k) {
    const auto inst = oracle::random_instance(rng, 120, 4, 0.3);
    const Eigen::VectorXd pf = Eigen::VectorXd::Ones(4);
    const auto problem = problem_of(inst, pf);
    const auto fit = fit_lasso_cox(problem, 1e-8 * compute_tau_max(problem, pf), pf);
    const auto newton = newton_fit(problem);
    CHECK((fit.coefficients - newton.coefficients).cwiseAbs().maxCoeff() <= 1e-4);
  }
}

TEST_CASE("matches grid search of the penalized objective") {
  Rng rng(113);
  const auto inst = oracle::random_instance(rng, 40, 3, 0.3, 0.6);
  Eigen::VectorXd pf = Eigen::VectorXd::Ones(3);
  pf(2) = 0.0;
  const auto problem = problem_of(inst, pf);
  const double tau = 0.3 * compute_tau_max(problem, pf);
  const auto fit = fit_lasso_cox(problem, tau, pf);
  const auto grid = oracle::lasso_grid_search(inst.x, inst.time, inst.event, pf, tau);
  CHECK((fit.coefficients - grid.beta).cwiseAbs().maxCoeff() <= 2e-3);
  CHECK(penalized_loss(problem, fit.coefficients, tau, pf) <= grid.objective + 1e-9);
}

TEST_CASE("column permutation permutes the solution") {
  Rng rng(127);
  const auto inst = oracle::random_instance(rng, 70, 6, 0.3, 0.6);
  const Eigen::VectorXd pf = Eigen::VectorXd::Ones(6);
  const std::vector<Eigen::Index> perm{3, 0, 5, 1, 4, 2};
  oracle::Instance permuted = inst;
  for (std::size_t j = 0; j < perm.size(); ++j) permuted.x.col(static_cast<Eigen::Index>(j)) = inst.x.col(perm[j]);
  const auto a = problem_of(inst, pf);
  const double tau = 0.2 * compute_tau_max(a, pf);
  LassoOptions tight;
  tight.coefficient_tolerance = 1e-10;
  tight.kkt_tolerance = 1e-8;
  const auto fa = fit_lasso_cox(a, tau, pf, std::nullopt, tight);
  const auto fb = fit_lasso_cox(problem_of(permuted, pf), tau, pf, std::nullopt, tight);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    CHECK(std::abs(fb.coefficients(static_cast<Eigen::Index>(j)) - fa.coefficients(perm[j])) <= 1e-8);
  }
}

TEST_CASE("rescaling an original column rescales its coefficient") {
  const auto sim = simulate(hdsurv::testing::strong_signal_spec(150, 10, 0.2), 131);
  auto scaled = sim.dataset;
  scaled.block("imaging").values.col(0) *= 25.0;
  const std::vector<std::string> blocks{"imaging"};
  const auto pa = make_cox_problem(sim.dataset, blocks);
  const auto pb = make_cox_problem(scaled, blocks);
  const Eigen::VectorXd pf = pa.penalty_factors();
  const double tau = 0.2 * compute_tau_max(pa, pf);
  const auto fa = fit_lasso_cox(pa, tau, pf);
  const auto fb = fit_lasso_cox(pb, tau, pf);
  CHECK(fb.coefficients(0) == doctest::Approx(fa.coefficients(0) / 25.0).epsilon(1e-8));
  std::vector<int> rows(150);
  std::iota(rows.begin(), rows.end(), 0);
  const Eigen::VectorXd sa = risk_scores(fa, sim.dataset, rows);
  const Eigen::VectorXd sb = risk_scores(fb, scaled, rows);
  CHECK((sa - sb).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("regularization path") {
  const auto sim = simulate(hdsurv::testing::strong_signal_spec(200, 20, 0.2), 137);
  const std::vector<std::string> blocks{"imaging"};
  const auto problem = make_cox_problem(sim.dataset, blocks);
  const Eigen::VectorXd pf = problem.penalty_factors();
  PathOptions options;
  options.grid_size = 30;
  const auto path = fit_path(problem, pf, options);
  REQUIRE(path.fits.size() == 30);
  CHECK(path.tau_grid.front() == path.tau_max);
  CHECK(path.tau_grid.back() == doctest::Approx(0.01 * path.tau_max));
  for (std::size_t t = 1; t < path.tau_grid.size(); ++t) {
    CHECK(path.tau_grid[t] < path.tau_grid[t - 1]);
    CHECK(std::log(path.tau_grid[t - 1] / path.tau_grid[t]) == doctest::Approx(std::log(100.0) / 29.0));
  }
  CHECK(path.fits.front().nonzero_penalized() == 0);
  CHECK(path.fits.back().nonzero_penalized() >= path.fits.front().nonzero_penalized());
  for (std::size_t t : {5u, 15u, 29u}) {
    const auto cold = fit_lasso_cox(problem, path.tau_grid[t], pf);
    CHECK((cold.coefficients - path.fits[t].coefficients).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(path.fits[t].kkt_residual <= 1e-4);
  }
}

TEST_CASE("stratified folds balance events") {
  Eigen::VectorXi event(53);
  for (Eigen::Index i = 0; i < event.size(); ++i) event(i) = i % 3 == 0 ? 0 : 1;
  const auto folds = stratified_folds(event, 10, 99);
  std::vector<int> size(10, 0), events(10, 0);
  for (Eigen::Index i = 0; i < event.size(); ++i) {
    ++size[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])];
    events[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])] += event(i);
  }
  CHECK(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()) <= 1);
  CHECK(*std::max_element(events.begin(), events.end()) - *std::min_element(events.begin(), events.end()) <= 1);
  CHECK(stratified_folds(event, 10, 99) == folds);
  CHECK(stratified_folds(event, 10, 100) != folds);
}

TEST_CASE("cross-validation") {
  const auto sim = simulate(hdsurv::testing::strong_signal_spec(200, 15, 0.2), 139);
  const std::vector<std::string> blocks{"imaging"};
  const auto problem = make_cox_problem(sim.dataset, blocks);
  const Eigen::VectorXd pf = problem.penalty_factors();
  CvOptions options;
  options.grid_size = 25;
  options.seed = 5;

  SUBCASE("deterministic, and independent of the thread count") {
    const auto a = cross_validate(problem, pf, options);
    options.threads = 4;
    const auto b = cross_validate(problem, pf, options);
    CHECK(a.cv_mean == b.cv_mean);
    CHECK(a.cv_sd == b.cv_sd);
    CHECK(a.fold_of == b.fold_of);
    CHECK(a.tau_min == b.tau_min);
    CHECK(a.tau_1se >= a.tau_min);
    CHECK(a.index_1se <= a.index_min);
  }
  SUBCASE("deviance criterion matches its definition for one fold") {
    options.folds = 5;
    const auto cv = cross_validate(problem, pf, options);
    const std::size_t t = 10;
    double total = 0.0;
    for (int k = 0; k < 5; ++k) {
      std::vector<int> train;
      for (Eigen::Index i = 0; i < problem.n(); ++i) {
        if (cv.fold_of[static_cast<std::size_t>(i)] != k) train.push_back(static_cast<int>(i));
      }
      const auto sub = problem.subset(train);
      const double share = static_cast<double>(train.size()) / static_cast<double>(problem.n());
      LassoOptions tight;
      const auto fit = fit_path_on_grid(sub, pf, std::vector<double>{cv.tau_grid[0] * share, cv.tau_grid[t] * share}, tight)
                           .fits.back();
      const double dev = -2.0 * (log_partial_likelihood(problem, fit.solver_coefficients) -
                                 log_partial_likelihood(sub, fit.solver_coefficients));
      total += dev;
    }
    CHECK(cv.cv_mean[t] == doctest::Approx(total / 5.0).epsilon(1e-4));
  }
  SUBCASE("too many folds") {
    options.folds = 500;
    CHECK_THROWS_AS(cross_validate(problem, pf, options), ValidationError);
  }
}

TEST_CASE("pure noise: the one-SE rule usually selects the empty model") {
  int empty = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto spec = hdsurv::testing::strong_signal_spec(150, 10, 0.0);
    spec.beta_imaging.clear();
    const auto sim = simulate(spec, 1000 + static_cast<std::uint64_t>(s));
    const std::vector<std::string> blocks{"imaging"};
    const auto problem = make_cox_problem(sim.dataset, blocks);
    CvOptions options;
    options.grid_size = 20;
    options.seed = static_cast<std::uint64_t>(s);
    const auto sel = cross_validate_with_path(problem, problem.penalty_factors(), options);
    if (sel.fit(SelectionRule::OneStandardError).nonzero_penalized() == 0) ++empty;
  }
  CHECK(empty >= 16);
}

TEST_CASE("more columns than subjects") {
  Rng rng(149);
  for (int k = 0; k < 5; ++k) {
    const auto inst = oracle::random_instance(rng, 30, 60, 0.3, 0.3);
    const Eigen::VectorXd pf = Eigen::VectorXd::Ones(60);
    const auto problem = problem_of(inst, pf);
    const double tau_max = compute_tau_max(problem, pf);
    for (double frac : {0.5, 0.2}) {
      const auto fit = fit_lasso_cox(problem, frac * tau_max, pf);
      REQUIRE(fit.converged);
      CHECK(oracle::lasso_kkt_oracle(inst.x, inst.time, inst.event, fit.coefficients, fit.tau, pf) <= 1e-4);
    }
  }
}
