#include "hdsurv/oracle/selfcheck.hpp"

#include <cmath>
#include <cstdio>

#include "hdsurv/cox.hpp"
#include "hdsurv/evaluation.hpp"
#include "hdsurv/group_lasso.hpp"
#include "hdsurv/lasso_cox.hpp"
#include "hdsurv/oracle/reference.hpp"

namespace hdsurv::oracle {
namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CheckResult gradient_check(Rng& rng) {
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto inst = random_instance(rng, 30, 5, 0.3);
    const CoxProblem problem(inst.x, inst.time, inst.event);
    Eigen::VectorXd beta(5);
    for (int j = 0; j < 5; ++j) beta(j) = 0.5 * rng.normal();
    const Eigen::VectorXd g = gradient(problem, beta);
    const Eigen::VectorXd fd =
        central_difference([&](const Eigen::VectorXd& b) { return log_partial_likelihood(problem, b); }, beta);
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }
  return {"gradient vs central differences", worst <= 1e-6, "max relative error " + sci(worst)};
}

CheckResult concordance_check(Rng& rng) {
  int mismatches = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = 2 + static_cast<int>(rng.below(49));
    const auto inst = random_instance(rng, n, 1, 0.1 + 0.5 * rng.uniform(), 0.5, k % 2 == 0);
    std::vector<double> s(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    std::vector<int> e(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = std::round(inst.x(i, 0) * 2.0);  // coarse scores force ties
      t[static_cast<std::size_t>(i)] = inst.time(i);
      e[static_cast<std::size_t>(i)] = inst.event(i);
    }
    const auto fast = concordance_counts(s, t, e);
    const auto slow = brute_force_concordance(s, t, e);
    if (fast.concordant_halves != slow.concordant_halves || fast.comparable != slow.comparable) ++mismatches;
  }
  return {"C-index vs brute force", mismatches == 0, std::to_string(mismatches) + " mismatches in 200 instances"};
}

CheckResult lasso_kkt_check(Rng& rng) {
  double worst = 0.0;
  int zero_failures = 0;
  for (int k = 0; k < 10; ++k) {
    const auto inst = random_instance(rng, 60, 8, 0.3);
    Eigen::VectorXd pf = Eigen::VectorXd::Ones(8);
    pf(0) = 0.0;
    const CoxProblem problem(inst.x, inst.time, inst.event, {}, pf);
    const double tau_max = compute_tau_max(problem, pf);
    for (double frac : {0.5, 0.1}) {
      const auto fit = fit_lasso_cox(problem, frac * tau_max, pf);
      worst = std::max(worst, lasso_kkt_oracle(inst.x, inst.time, inst.event, fit.solver_coefficients, fit.tau, pf));
    }
    const auto null_fit = fit_lasso_cox(problem, tau_max, pf);
    if (null_fit.nonzero_penalized() != 0) ++zero_failures;
  }
  return {"Lasso-Cox KKT and tau_max", worst <= 1e-4 && zero_failures == 0,
          "max KKT residual " + sci(worst) + ", " + std::to_string(zero_failures) + " nonzero fits at tau_max"};
}

CheckResult group_check(Rng& rng) {
  double ls_gap = 0.0, kkt = 0.0, at_max = 0.0;
  for (int k = 0; k < 5; ++k) {
    const int n = 60, p = 4, q = 6;
    Eigen::MatrixXd z(n, q), x(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < q; ++j) z(i, j) = rng.normal();
      for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
    }
    x.col(0) += z.col(0) - 0.5 * z.col(1);
    const auto full = fit_group_lasso(x, z, 0.0);
    ls_gap = std::max(ls_gap, (full.eta - least_squares_eta(x, z)).cwiseAbs().maxCoeff());
    const double tau_max = compute_tau_max_groups(x, z);
    const auto mid = fit_group_lasso(x, z, 0.3 * tau_max);
    kkt = std::max(kkt, group_kkt_oracle(x, z, mid.eta, mid.intercepts, mid.tau));
    at_max = std::max(at_max, fit_group_lasso(x, z, tau_max).eta.cwiseAbs().maxCoeff());
  }
  return {"group Lasso vs least squares and KKT", ls_gap <= 1e-6 && kkt <= 1e-4 && at_max == 0.0,
          "LS gap " + sci(ls_gap) + ", KKT " + sci(kkt) + ", max |eta| at tau_max " + sci(at_max)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  out.push_back(gradient_check(rng));
  out.push_back(concordance_check(rng));
  out.push_back(lasso_kkt_check(rng));
  out.push_back(group_check(rng));
  return out;
}

}  // namespace hdsurv::oracle
