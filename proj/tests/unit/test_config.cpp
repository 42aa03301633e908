#include <doctest.h>

#include "fixtures.hpp"
#include "hdsurv/errors.hpp"
#include "hdsurv/pipeline.hpp"

using namespace hdsurv;

namespace {

const char* kSimulated = R"([simulate]
n = 120
p_imaging = 8
q_expression = 6
beta_imaging = 1:0.8, 3:-1
eta = 2:1:0.5, 4:6:-0.25
snr = 3
rho = 0.1

[analysis]
associate = false

[solver]
folds = 5
grid_size = 20
selection = 1se

[protocol]
master_seed = 12345
n_repeats = 7

[output]
dir = out
svg = yes
)";

}  // namespace

TEST_CASE("parse a simulated config") {
  const auto c = parse_config(kSimulated, "/base");
  REQUIRE(c.simulation);
  CHECK_FALSE(c.input);
  CHECK(c.simulation->n == 120);
  REQUIRE(c.simulation->beta_imaging.size() == 2);
  CHECK(c.simulation->beta_imaging[0].index == 0);
  CHECK(c.simulation->beta_imaging[1].index == 2);
  CHECK(c.simulation->beta_imaging[1].value == -1.0);
  REQUIRE(c.simulation->eta.size() == 2);
  CHECK(c.simulation->eta[1].feature == 3);
  CHECK(c.simulation->eta[1].gene == 5);
  CHECK(c.simulation->eta[1].value == -0.25);
  CHECK_FALSE(c.analysis.associate);
  CHECK(c.analysis.evaluate);
  CHECK(c.solver.folds == 5);
  CHECK(c.solver.rule == SelectionRule::OneStandardError);
  CHECK(c.solver.ratio == 0.01);
  CHECK(c.protocol.master_seed == 12345);
  CHECK(c.protocol.n_repeats == 7);
  CHECK(c.protocol.train_fraction == 0.75);
  CHECK(c.output_dir == std::filesystem::path("/base/out"));
  CHECK(c.svg);
  CHECK(simulation_seed(c) == simulation_seed(parse_config(kSimulated, "/elsewhere")));
}

TEST_CASE("canonical INI round-trips") {
  const auto c = parse_config(kSimulated, "/base");
  const auto text = config_to_ini(c);
  const auto again = parse_config(text, "/unused");
  CHECK(config_to_ini(again) == text);
  CHECK(again.output_dir == c.output_dir);
  CHECK(simulation_seed(again) == simulation_seed(c));
}

TEST_CASE("input paths resolve against the config directory") {
  const auto c = parse_config(
      "[input]\nsurvival = data/s.csv\nimaging = /abs/i.csv\nexpression = e.csv\n[protocol]\nmaster_seed = 1\n",
      "/cfg");
  REQUIRE(c.input);
  CHECK(c.input->survival == std::filesystem::path("/cfg/data/s.csv"));
  CHECK(c.input->imaging == std::filesystem::path("/abs/i.csv"));
  CHECK_FALSE(c.input->clinical);
}

TEST_CASE("config errors") {
  auto fails = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(fragment) != std::string::npos;
    }
    return false;
  };
  CHECK(fails("[simulate]\nn = 10\n", "master_seed is required"));
  CHECK(fails("[simulate]\nn = 10\nbogus = 1\n[protocol]\nmaster_seed = 1\n", "unknown key 'bogus'"));
  CHECK(fails("[extras]\na = 1\n[protocol]\nmaster_seed = 1\n", "unknown section"));
  CHECK(fails("[simulate]\nn = ten\n[protocol]\nmaster_seed = 1\n", "cannot parse"));
  CHECK(fails("[simulate]\nn = 10\n[input]\nsurvival = a\n[protocol]\nmaster_seed = 1\n", "both"));
  CHECK(fails("[protocol]\nmaster_seed = 1\n", "[input] or a [simulate]"));
  CHECK(fails("[simulate]\nbeta_imaging = 0:1\n[protocol]\nmaster_seed = 1\n", "indices start at 1"));
  CHECK(fails("[simulate]\n[solver]\nselection = best\n[protocol]\nmaster_seed = 1\n", "min or 1se"));
  CHECK(fails("[simulate]\n[solver]\nfolds = 1\n[protocol]\nmaster_seed = 1\n", "folds"));
  CHECK(fails("[simulate]\n[solver]\nratio = 1\n[protocol]\nmaster_seed = 1\n", "ratio"));
  CHECK(fails("[simulate]\n[protocol]\nmaster_seed = 1\ntrain_fraction = 1.5\n", "train_fraction"));
  CHECK(fails("[input]\nsurvival = s.csv\n[protocol]\nmaster_seed = 1\n", "imaging is required"));
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("the shipped default config parses") {
  const auto c = load_config(std::filesystem::path(HDSURV_SOURCE_DIR) / "configs" / "default_simulated.ini");
  REQUIRE(c.simulation);
  CHECK(c.protocol.n_repeats == 100);
  CHECK(c.analysis.cox_imaging);
  CHECK(c.analysis.evaluate);
}
