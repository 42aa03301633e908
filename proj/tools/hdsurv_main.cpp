#include <CLI11.hpp>
#include <iostream>

#include "hdsurv/errors.hpp"
#include "hdsurv/oracle/selfcheck.hpp"
#include "hdsurv/pipeline.hpp"
#include "hdsurv/render.hpp"

namespace {

using namespace hdsurv;

int report(const std::exception& e, int code) {
  std::cerr << "hdsurv: " << e.what() << '\n';
  return code;
}

PipelineConfig resolve_config(const std::string& config_path, const std::string& manifest_path,
                              const std::optional<std::uint64_t>& seed, const std::string& out, int threads) {
  PipelineConfig c = manifest_path.empty() ? load_config(config_path) : config_from_manifest(manifest_path);
  if (seed) c.protocol.master_seed = *seed;
  if (!out.empty()) c.output_dir = out;
  c.threads = threads;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized Cox survival analysis of imaging and gene-expression features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  std::string config_path, manifest_path, out, input, kind;
  std::optional<std::uint64_t> seed;
  int threads = 1;

  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort described by a config's [simulate] section");
  sim->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "override [protocol] master_seed");
  sim->add_option("--out", out, "output directory")->required();

  auto* run = app.add_subcommand("run", "run the configured analyses");
  auto* cfg_opt = run->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  auto* man_opt = run->add_option("--manifest", manifest_path, "replay the config echoed in a run manifest")
                      ->check(CLI::ExistingFile);
  cfg_opt->excludes(man_opt);
  run->add_option("--seed", seed, "override [protocol] master_seed");
  run->add_option("--threads", threads, "worker threads (results do not depend on this)")
      ->check(CLI::Range(1, 256));
  run->add_option("--out", out, "override [output] dir");

  auto* render = app.add_subcommand("render", "render a pipeline table as SVG");
  render->add_option("--input", input, "table file")->required()->check(CLI::ExistingFile);
  render->add_option("--kind", kind, "heatmap, line or meansd")->required();
  render->add_option("--out", out, "SVG file")->required();

  auto* check = app.add_subcommand("check", "run the oracle and KKT self-test battery");
  check->add_option("--seed", seed, "seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; usage errors share the config-error code.
    return app.exit(e) == 0 ? kSuccess : kConfigError;
  }

  try {
    if (*sim) {
      auto c = resolve_config(config_path, "", seed, "", 1);
      if (!c.simulation) throw ConfigError("config has no [simulate] section");
      const auto data = simulate(*c.simulation, simulation_seed(c));
      write_simulated(data, out);
      std::cout << "wrote " << data.dataset.size() << " subjects to " << out << " (censored fraction "
                << data.truth.censoring_fraction << ")\n";
      return kSuccess;
    }
    if (*run) {
      if (config_path.empty() && manifest_path.empty()) throw ConfigError("run needs --config or --manifest");
      const auto c = resolve_config(config_path, manifest_path, seed, out, threads);
      const auto result = run_pipeline(c);
      for (const auto& s : result.stages) {
        std::cout << (s.ok ? "ok     " : "FAILED ") << s.stage;
        if (!s.ok) std::cout << ": " << s.message;
        std::cout << '\n';
      }
      std::cout << "outputs in " << c.output_dir.string() << '\n';
      return result.exit_code;
    }
    if (*render) {
      render_svg_file(input, parse_render_kind(kind), out);
      return kSuccess;
    }
    if (*check) {
      const auto results = seed ? oracle::run_selfcheck(*seed) : oracle::run_selfcheck();
      bool all = true;
      for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        all = all && r.passed;
      }
      return all ? kSuccess : kNumericalFailure;
    }
  } catch (const NumericalError& e) {
    return report(e, kNumericalFailure);
  } catch (const std::exception& e) {
    return report(e, kConfigError);
  }
  return kSuccess;
}
