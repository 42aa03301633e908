#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "hdsurv/data_model.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/rng.hpp"

using namespace hdsurv;
using hdsurv::testing::TempDir;
using hdsurv::testing::write_file;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FeatureBlock block_of(Eigen::MatrixXd values) {
  FeatureBlock b;
  b.name = "imaging";
  for (Eigen::Index j = 0; j < values.cols(); ++j) b.column_names.push_back("f" + std::to_string(j));
  b.penalty_factor = Eigen::VectorXd::Ones(values.cols());
  b.values = std::move(values);
  return b;
}

}  // namespace

TEST_CASE("load_dataset joins on subject id and reports dropped rows") {
  TempDir dir("load");
  write_file(dir / "survival.csv", "id,time,status\nA,1,1\nB,2,0\nC,3,1\nD,4,1\nE,5,0\nX,6,1\n");
  write_file(dir / "imaging.csv", "id,f1,f2\nE,1,2\nD,3,4\nC,5,6\nB,7,8\nA,9,10\nY,0,0\n");
  write_file(dir / "clinical.csv",
             "id,sex,age,stage,longest_dim,shortest_dim\n"
             "A,F,60,Stage IA,0.9,0.5\nB,M,61,Stage IIB,1,1\nC,F,62,Stage IV,1,2\nD,M,63,Stage IIIA,2,2\n"
             "E,F,64,Stage IB,1,1\n");
  const auto loaded = load_dataset(dir / "survival.csv", {{"imaging", dir / "imaging.csv"}}, dir / "clinical.csv");
  const auto& d = loaded.dataset;
  REQUIRE(d.size() == 5);
  CHECK(loaded.report.rows_dropped == 2);
  CHECK(d.records[0].subject_id == "A");
  CHECK(d.records[4].subject_id == "E");
  CHECK(d.block("imaging").values(0, 0) == 9.0);
  CHECK(d.block("imaging").values(4, 1) == 2.0);
  CHECK(d.block("clinical").values(0, 2) == doctest::Approx(0.45));
  CHECK(d.block("clinical").penalty_factor.isZero());
  CHECK(d.block("imaging").penalty_factor.isOnes());
}

TEST_CASE("join does not depend on input row order") {
  TempDir dir("order");
  write_file(dir / "s1.csv", "id,time,status\nA,1,1\nB,2,0\nC,3,1\n");
  write_file(dir / "s2.csv", "id,time,status\nC,3,1\nA,1,1\nB,2,0\n");
  write_file(dir / "i1.csv", "id,f\nA,1\nB,2\nC,3\n");
  write_file(dir / "i2.csv", "id,f\nB,2\nC,3\nA,1\n");
  const auto a = load_dataset(dir / "s1.csv", {{"imaging", dir / "i1.csv"}}, std::nullopt).dataset;
  const auto b = load_dataset(dir / "s2.csv", {{"imaging", dir / "i2.csv"}}, std::nullopt).dataset;
  REQUIRE(a.size() == b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    CHECK(a.records[static_cast<std::size_t>(i)].subject_id == b.records[static_cast<std::size_t>(i)].subject_id);
  }
  CHECK(a.block("imaging").values == b.block("imaging").values);
}

TEST_CASE("load_dataset errors") {
  TempDir dir("errors");
  write_file(dir / "img.csv", "id,f\nA,1\nB,2\n");

  SUBCASE("negative time") {
    write_file(dir / "s.csv", "id,time,status\nA,-1,1\nB,2,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "s.csv", {{"imaging", dir / "img.csv"}}, std::nullopt), ValidationError);
  }
  SUBCASE("duplicate id") {
    write_file(dir / "s.csv", "id,time,status\nA,1,1\nA,2,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "s.csv", {{"imaging", dir / "img.csv"}}, std::nullopt), ValidationError);
  }
  SUBCASE("no overlap") {
    write_file(dir / "s.csv", "id,time,status\nC,1,1\nD,2,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "s.csv", {{"imaging", dir / "img.csv"}}, std::nullopt), ValidationError);
  }
  SUBCASE("malformed row carries its line number") {
    write_file(dir / "s.csv", "id,time,status\nA,1,1\nB,2\n");
    try {
      load_dataset(dir / "s.csv", {{"imaging", dir / "img.csv"}}, std::nullopt);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("non-numeric feature") {
    write_file(dir / "s.csv", "id,time,status\nA,1,1\nB,2,0\n");
    write_file(dir / "bad.csv", "id,f\nA,abc\nB,2\n");
    CHECK_THROWS_AS(load_dataset(dir / "s.csv", {{"imaging", dir / "bad.csv"}}, std::nullopt), ParseError);
  }
  SUBCASE("bad status") {
    write_file(dir / "s.csv", "id,time,status\nA,1,2\nB,2,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "s.csv", {{"imaging", dir / "img.csv"}}, std::nullopt), ValidationError);
  }
}

TEST_CASE("header-only files give an empty dataset with a warning") {
  TempDir dir("empty");
  write_file(dir / "s.csv", "id,time,status\n");
  write_file(dir / "i.csv", "id,f\n");
  const auto loaded = load_dataset(dir / "s.csv", {{"imaging", dir / "i.csv"}}, std::nullopt);
  CHECK(loaded.dataset.size() == 0);
  CHECK_FALSE(loaded.report.warnings.empty());
}

TEST_CASE("missing cells become NaN and are counted") {
  TempDir dir("missing");
  write_file(dir / "s.csv", "id,time,status\nA,1,1\nB,2,0\nC,3,1\nD,4,1\n");
  write_file(dir / "i.csv", "id,f,g\nA,1,\nB,NA,2\nC,3,3\nD,4,4\n");
  const auto loaded = load_dataset(dir / "s.csv", {{"imaging", dir / "i.csv"}}, std::nullopt);
  CHECK(std::isnan(loaded.dataset.block("imaging").values(1, 0)));
  CHECK(loaded.report.missing_fraction.at("imaging")[0] == 0.25);
  CHECK(loaded.report.missing_fraction.at("imaging")[1] == 0.25);
}

TEST_CASE("quality_control") {
  SUBCASE("30% missing is removed, 10% missing is imputed with the observed mean") {
    Eigen::MatrixXd v(10, 3);
    v.col(0) << 1, 2, 3, kNaN, 1, 2, 3, 1, 2, 3;
    v.col(1) << kNaN, kNaN, kNaN, 4, 5, 6, 7, 8, 9, 10;
    v.col(2) << 5, 1, 4, 2, 3, 5, 1, 4, 2, 3;
    const auto qc = quality_control(block_of(v));
    REQUIRE(qc.block.cols() == 2);
    CHECK(qc.block.column_names[0] == "f0");
    CHECK(qc.block.values(3, 0) == doctest::Approx(18.0 / 9.0).epsilon(1e-15));
    REQUIRE(qc.removed.size() == 1);
    CHECK(qc.removed[0].column == "f1");
    CHECK(qc.removed[0].reason == "missingness");
  }
  SUBCASE("exactly 25% missing is kept") {
    Eigen::MatrixXd v(4, 1);
    v << 1, kNaN, 3, 4;
    CHECK(quality_control(block_of(v)).block.cols() == 1);
  }
  SUBCASE("constant column is removed") {
    Eigen::MatrixXd v(4, 2);
    v << 1, 7, 2, 7, 3, 7, 4, 7;
    const auto qc = quality_control(block_of(v));
    CHECK(qc.block.cols() == 1);
    CHECK(qc.removed[0].reason == "low variance");
  }
  SUBCASE("nothing survives") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(4, 2, 3.0);
    CHECK_THROWS_WITH_AS(quality_control(block_of(v)), doctest::Contains("no features survive QC"), ValidationError);
  }
  SUBCASE("idempotent") {
    Rng rng(11);
    Eigen::MatrixXd v(40, 6);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = rng.uniform() < 0.15 * static_cast<double>(j) / 2 ? kNaN : rng.normal();
    }
    v.col(5).setConstant(1.0);
    const auto once = quality_control(block_of(v));
    const auto twice = quality_control(once.block);
    CHECK(twice.removed.empty());
    CHECK(twice.block.column_names == once.block.column_names);
    CHECK(twice.block.values == once.block.values);
  }
}

TEST_CASE("encode_clinical") {
  const std::vector<ClinicalRow> rows{{"F", 60, "Stage IA", 0.9, 0.5},
                                      {"M", 70, "Stage IV", 2.0, 1.0},
                                      {"male", 55, "Stage IIB", 1.0, 1.0}};
  const auto b = encode_clinical(rows);
  CHECK(b.column_names == clinical_column_names());
  CHECK(b.values(0, 0) == 0.0);
  CHECK(b.values(1, 0) == 1.0);
  CHECK(b.values(2, 0) == 1.0);
  CHECK(b.values(0, 2) == doctest::Approx(0.45));
  CHECK(b.values(0, 3) == 1.0);
  CHECK(b.values(0, 4) == 0.0);
  CHECK(b.values(1, 3) == 0.0);
  CHECK(b.values(1, 4) == 0.0);
  CHECK(b.values(2, 4) == 1.0);
  CHECK(b.penalty_factor.isZero());

  CHECK(stage_level("Stage IIIB") == StageLevel::C);
  CHECK(stage_level("stage ib") == StageLevel::A);
  CHECK_THROWS_WITH_AS(stage_level("Stage V"), doctest::Contains("Stage V"), ValidationError);
  const std::vector<ClinicalRow> bad_sex{{"X", 60, "Stage IA", 1, 1}};
  CHECK_THROWS_AS(encode_clinical(bad_sex), ValidationError);
}

TEST_CASE("standardize and back-transform") {
  Eigen::MatrixXd v(3, 1);
  v << 1, 2, 3;
  const auto s = standardize(block_of(v));
  CHECK(s.block.values(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-14));
  CHECK(s.block.values(1, 0) == 0.0);
  CHECK(s.block.values(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-14));
  CHECK(s.scaling.scale(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));

  const auto again = standardize(s.block);
  CHECK((again.block.values - s.block.values).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(3, 1);
  CHECK_THROWS_AS(standardize(block_of(constant)), ValidationError);
  Eigen::MatrixXd missing(2, 1);
  missing << 1, kNaN;
  CHECK_THROWS_AS(standardize(block_of(missing)), ValidationError);

  // Linear predictors agree on both scales up to the absorbed offset.
  Rng rng(5);
  Eigen::MatrixXd x(25, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = 3.0 * rng.normal() + static_cast<double>(j);
  }
  const auto st = standardize(block_of(x));
  Eigen::VectorXd beta(4);
  for (Eigen::Index j = 0; j < 4; ++j) beta(j) = rng.normal();
  double offset = 0.0;
  const Eigen::VectorXd original = back_transform(beta, st.scaling, &offset);
  const Eigen::VectorXd lp_std = st.block.values * beta;
  const Eigen::VectorXd lp_orig = (x * original).array() + offset;
  CHECK((lp_std - lp_orig).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("FeatureBlock validation") {
  auto b = block_of(Eigen::MatrixXd::Ones(2, 2));
  CHECK_NOTHROW(b.validate());
  b.column_names[1] = "f0";
  CHECK_THROWS_AS(b.validate(), ValidationError);
  b = block_of(Eigen::MatrixXd::Ones(2, 2));
  b.penalty_factor.resize(1);
  CHECK_THROWS_AS(b.validate(), ValidationError);
}
