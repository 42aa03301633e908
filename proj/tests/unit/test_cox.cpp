#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "fixtures.hpp"
#include "hdsurv/cox.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/oracle/reference.hpp"

using namespace hdsurv;
using hdsurv::testing::problem_of;

namespace {

CoxProblem tiny(Eigen::MatrixXd x, std::initializer_list<double> t, std::initializer_list<int> e) {
  Eigen::VectorXd time(static_cast<Eigen::Index>(t.size()));
  Eigen::VectorXi event(static_cast<Eigen::Index>(e.size()));
  Eigen::Index i = 0;
  for (double v : t) time(i++) = v;
  i = 0;
  for (int v : e) event(i++) = v;
  return CoxProblem(std::move(x), time, event);
}

// Golden-section maximization of a unimodal function on [lo, hi].
double golden_max(const std::function<double(double)>& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  while (b - a > 1e-10) {
    if (f(c) > f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("log partial likelihood: hand values") {
  const auto p3 = tiny(Eigen::MatrixXd::Zero(3, 1), {1, 2, 3}, {1, 1, 1});
  CHECK(log_partial_likelihood(p3, Eigen::VectorXd::Zero(1)) == doctest::Approx(-1.791759469228055).epsilon(1e-14));
  CHECK(log_partial_likelihood(p3, Eigen::VectorXd::Zero(1)) == doctest::Approx(-(std::log(3.0) + std::log(2.0))));

  const auto single = tiny(Eigen::MatrixXd::Ones(1, 1), {4}, {1});
  CHECK(log_partial_likelihood(single, Eigen::VectorXd::Constant(1, 2.5)) == 0.0);

  const auto none = tiny(Eigen::MatrixXd::Ones(2, 1), {1, 2}, {0, 0});
  CHECK_THROWS_WITH_AS(log_partial_likelihood(none, Eigen::VectorXd::Zero(1)),
                       doctest::Contains("zero events"), NumericalError);
}

TEST_CASE("at beta = 0 the likelihood is minus the summed log risk-set sizes") {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto inst = oracle::random_instance(rng, 25, 3, 0.4, 0.5, true);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < inst.time.size(); ++i) {
      if (!inst.event(i)) continue;
      expected -= std::log(static_cast<double>((inst.time.array() >= inst.time(i)).count()));
    }
    CHECK(log_partial_likelihood(problem_of(inst), Eigen::VectorXd::Zero(3)) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("likelihood matches the double-loop oracle, with and without ties") {
  Rng rng(17);
  for (int k = 0; k < 20; ++k) {
    const auto inst = oracle::random_instance(rng, 10, 3, 0.3, 0.5, k % 2 == 0);
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta(j) = rng.normal();
    const double fast = log_partial_likelihood(problem_of(inst), beta);
    const double slow = oracle::naive_log_likelihood(inst.x, inst.time, inst.event, beta);
    CHECK(std::abs(fast - slow) <= 1e-12 * std::max(1.0, std::abs(slow)));
    const Eigen::VectorXd g = gradient(problem_of(inst), beta);
    const Eigen::VectorXd g_slow = oracle::naive_gradient(inst.x, inst.time, inst.event, beta);
    CHECK((g - g_slow).cwiseAbs().maxCoeff() <= 1e-11);
  }
}

TEST_CASE("censored subjects tied with an event stay in its risk set") {
  // Subject 1 is censored at the event time of subject 0.
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  const auto problem = tiny(x, {2, 2}, {1, 0});
  const double beta = 0.7;
  const double expected = 0.0 - std::log(1.0 + std::exp(beta));
  CHECK(log_partial_likelihood(problem, Eigen::VectorXd::Constant(1, beta)) == doctest::Approx(expected));
}

TEST_CASE("stable for large linear predictors") {
  Eigen::MatrixXd x(3, 1);
  x << 800.0, 790.0, 0.0;
  const auto problem = tiny(x, {1, 2, 3}, {1, 1, 0});
  const double l = log_partial_likelihood(problem, Eigen::VectorXd::Ones(1));
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(800.0 - (800.0 + std::log1p(std::exp(-10.0)))));
}

TEST_CASE("gradient: hand value, constant column, finite differences") {
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 0.0;
  CHECK(gradient(tiny(x, {1, 2}, {1, 1}), Eigen::VectorXd::Zero(1))(0) == doctest::Approx(0.5));

  Rng rng(23);
  for (int k = 0; k < 20; ++k) {
    auto inst = oracle::random_instance(rng, 30, 5, 0.3);
    inst.x.col(2).setConstant(1.7);
    const auto problem = problem_of(inst);
    Eigen::VectorXd beta(5);
    for (int j = 0; j < 5; ++j) beta(j) = rng.normal();
    const Eigen::VectorXd g = gradient(problem, beta);
    CHECK(std::abs(g(2)) <= 1e-12);
    const Eigen::VectorXd fd = oracle::central_difference(
        [&](const Eigen::VectorXd& b) { return oracle::naive_log_likelihood(inst.x, inst.time, inst.event, b); }, beta);
    CHECK((g - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()) <= 1e-6);
  }
}

TEST_CASE("likelihood depends on times only through their order") {
  Rng rng(29);
  const auto inst = oracle::random_instance(rng, 30, 3, 0.3, 0.5, true);
  auto shifted = inst;
  shifted.time.array() += 17.0;
  Eigen::VectorXd beta(3);
  beta << 0.3, -0.2, 0.9;
  CHECK(log_partial_likelihood(problem_of(inst), beta) == doctest::Approx(log_partial_likelihood(problem_of(shifted), beta)).epsilon(1e-13));
}

TEST_CASE("likelihood is concave along random directions") {
  Rng rng(31);
  for (int k = 0; k < 10; ++k) {
    const auto inst = oracle::random_instance(rng, 40, 4, 0.3);
    const auto problem = problem_of(inst);
    Eigen::VectorXd beta(4), dir(4);
    for (int j = 0; j < 4; ++j) {
      beta(j) = 0.5 * rng.normal();
      dir(j) = rng.normal();
    }
    std::vector<double> g;
    for (int s = -5; s <= 5; ++s) g.push_back(log_partial_likelihood(problem, beta + 0.2 * s * dir));
    for (std::size_t s = 1; s + 1 < g.size(); ++s) CHECK(g[s - 1] + g[s + 1] - 2.0 * g[s] <= 1e-9 * std::abs(g[s]));
  }
}

TEST_CASE("newton_fit") {
  Rng rng(37);
  SUBCASE("gradient tolerance at the solution") {
    const auto inst = oracle::random_instance(rng, 80, 4, 0.3);
    const auto fit = newton_fit(problem_of(inst));
    CHECK(fit.converged);
    CHECK(oracle::naive_gradient(inst.x, inst.time, inst.event, fit.coefficients).cwiseAbs().maxCoeff() <= 1e-8);
    REQUIRE(fit.standard_errors);
    CHECK((fit.standard_errors->array() > 0.0).all());
  }
  SUBCASE("one column matches golden-section search") {
    const auto inst = oracle::random_instance(rng, 40, 1, 0.3);
    const auto fit = newton_fit(problem_of(inst));
    const double golden = golden_max(
        [&](double b) { return oracle::naive_log_likelihood(inst.x, inst.time, inst.event, Eigen::VectorXd::Constant(1, b)); },
        -5.0, 5.0);
    CHECK(fit.coefficients(0) == doctest::Approx(golden).epsilon(1e-6));
  }
  SUBCASE("rank deficiency") {
    auto inst = oracle::random_instance(rng, 40, 3, 0.3);
    inst.x.col(2) = 2.0 * inst.x.col(0) - inst.x.col(1);
    CHECK_THROWS_WITH_AS(newton_fit(problem_of(inst)), doctest::Contains("rank-deficient"), NumericalError);
  }
  SUBCASE("column subset") {
    const auto inst = oracle::random_instance(rng, 60, 3, 0.3);
    const std::vector<Eigen::Index> cols{2};
    const auto fit = newton_fit(problem_of(inst), cols);
    REQUIRE(fit.coefficients.size() == 1);
    const oracle::Instance one{inst.x.col(2), inst.time, inst.event};
    CHECK(fit.coefficients(0) == doctest::Approx(newton_fit(problem_of(one)).coefficients(0)).epsilon(1e-10));
  }
}

TEST_CASE("null coefficients are within two standard errors in most simulations") {
  Rng rng(41);
  int inside = 0;
  for (int k = 0; k < 100; ++k) {
    const auto inst = oracle::random_instance(rng, 100, 1, 0.3, 0.0);
    const auto fit = newton_fit(problem_of(inst));
    if (std::abs(fit.coefficients(0)) <= 2.0 * (*fit.standard_errors)(0)) ++inside;
  }
  CHECK(inside >= 90);
}

TEST_CASE("risk scores") {
  CoxFit fit;
  fit.names = {"a", "b"};
  fit.coefficients = Eigen::Vector2d(1.0, -1.0);
  const std::vector<double> x{2.0, 3.0};
  CHECK(risk_score(fit, x) == -1.0);
  fit.coefficients.setZero();
  CHECK(risk_score(fit, x) == 0.0);
  const std::vector<double> short_x{1.0};
  CHECK_THROWS_AS(risk_score(fit, short_x), ValidationError);
}

TEST_CASE("standardized and original-scale scores rank subjects identically") {
  const auto sim = simulate(hdsurv::testing::strong_signal_spec(120, 8, 0.0), 43);
  const std::vector<std::string> blocks{"imaging"};
  const auto problem = make_cox_problem(sim.dataset, blocks);
  REQUIRE(problem.scaling());
  const auto fit = newton_fit(problem);
  std::vector<int> rows(120);
  std::iota(rows.begin(), rows.end(), 0);
  const Eigen::VectorXd original = risk_scores(fit, sim.dataset, rows);
  const Eigen::VectorXd standardized = problem.design() * fit.solver_coefficients;
  const Eigen::VectorXd diff = original - standardized;
  CHECK(diff.maxCoeff() - diff.minCoeff() <= 1e-10);
}
