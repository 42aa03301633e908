#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hdsurv/data_model.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/simulate.hpp"

using namespace hdsurv;
using hdsurv::testing::TempDir;

TEST_CASE("censoring calibration") {
  SimulationSpec spec;
  spec.n = 1000;
  spec.p_imaging = 5;
  spec.beta_imaging = {{0, 0.5}, {1, -0.5}};
  spec.censoring_target = 0.4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto sim = simulate(spec, seed);
    int censored = 0;
    for (const auto& r : sim.dataset.records) censored += r.event ? 0 : 1;
    const double fraction = censored / 1000.0;
    CHECK(fraction >= 0.35);
    CHECK(fraction <= 0.45);
    CHECK(fraction == sim.truth.censoring_fraction);
  }
}

TEST_CASE("unattainable censoring target") {
  SimulationSpec spec;
  spec.n = 2;
  spec.p_imaging = 1;
  spec.clinical = false;
  spec.censoring_target = 0.25;
  CHECK_THROWS_AS(simulate(spec, 1), NumericalError);
}

TEST_CASE("spec validation") {
  SimulationSpec spec;
  spec.beta_imaging = {{500, 1.0}};
  CHECK_THROWS_AS(simulate(spec, 1), ValidationError);
  SimulationSpec linked;
  linked.eta = {{0, 0, 1.0}};
  CHECK_THROWS_AS(simulate(linked, 1), ValidationError);
}

TEST_CASE("same spec and seed give identical data and files") {
  SimulationSpec spec;
  spec.n = 60;
  spec.p_imaging = 6;
  spec.q_expression = 4;
  spec.eta = {{0, 1, 0.7}};
  spec.snr = 2.0;
  spec.beta_expression = {{1, 0.5}};
  const auto a = simulate(spec, 77);
  const auto b = simulate(spec, 77);
  CHECK(a.dataset.block("imaging").values == b.dataset.block("imaging").values);
  CHECK(a.dataset.block("expression").values == b.dataset.block("expression").values);
  CHECK(a.dataset.times() == b.dataset.times());
  CHECK(simulate(spec, 78).dataset.times() != a.dataset.times());

  TempDir d1("sim1"), d2("sim2");
  write_simulated(a, d1.path());
  write_simulated(b, d2.path());
  CHECK(hdsurv::testing::directory_contents(d1.path()) == hdsurv::testing::directory_contents(d2.path()));
}

TEST_CASE("written files load back exactly") {
  SimulationSpec spec;
  spec.n = 40;
  spec.p_imaging = 3;
  spec.q_expression = 2;
  const auto sim = simulate(spec, 5);
  TempDir dir("roundtrip");
  write_simulated(sim, dir.path());
  const auto loaded = load_dataset(dir / "survival.csv",
                                   {{"imaging", dir / "imaging.csv"}, {"expression", dir / "expression.csv"}},
                                   dir / "clinical.csv");
  const auto& d = loaded.dataset;
  REQUIRE(d.size() == 40);
  CHECK(loaded.report.rows_dropped == 0);
  CHECK(d.block("imaging").values == sim.dataset.block("imaging").values);
  CHECK(d.block("expression").values == sim.dataset.block("expression").values);
  CHECK(d.block("clinical").values == sim.dataset.block("clinical").values);
  CHECK(d.times() == sim.dataset.times());
  CHECK(d.events() == sim.dataset.events());
  CHECK(std::filesystem::exists(dir / "ground_truth.json"));
}

TEST_CASE("linked imaging features follow the requested signal-to-noise ratio") {
  SimulationSpec spec;
  spec.n = 5000;
  spec.p_imaging = 2;
  spec.q_expression = 3;
  spec.clinical = false;
  spec.eta = {{0, 0, 1.0}, {0, 1, 1.0}};
  spec.snr = 4.0;
  const auto sim = simulate(spec, 9);
  const Eigen::MatrixXd& x = sim.dataset.block("imaging").values;
  const Eigen::MatrixXd& z = sim.dataset.block("expression").values;
  const Eigen::VectorXd signal = z.col(0) + z.col(1);
  const Eigen::VectorXd noise = x.col(0) - signal;
  auto var = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); };
  CHECK(var(signal) / var(noise) == doctest::Approx(4.0).epsilon(0.1));
  // The unlinked feature is pure unit-variance noise.
  CHECK(var(x.col(1)) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("column and subject names") {
  CHECK(imaging_column(0) == "img_1");
  CHECK(expression_column(11) == "gene_12");
  CHECK(subject_name(6, 300) == "S007");
  CHECK(subject_name(299, 300) == "S300");
}
