#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace hdsurv::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("hdsurv_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CoxProblem problem_of(const oracle::Instance& inst, Eigen::VectorXd penalty_factors) {
  return CoxProblem(inst.x, inst.time, inst.event, {}, std::move(penalty_factors));
}

std::vector<std::pair<std::string, std::string>> directory_contents(const std::filesystem::path& dir,
                                                                    const std::vector<std::string>& skip) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir).generic_string();
    bool skipped = false;
    for (const auto& s : skip) skipped = skipped || rel == s;
    if (!skipped) out.emplace_back(rel, read_file(entry.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SimulationSpec strong_signal_spec(int n, int p, double rho) {
  SimulationSpec s;
  s.n = n;
  s.p_imaging = p;
  s.q_expression = 0;
  s.clinical = false;
  s.rho = rho;
  s.block_size = 10;
  s.beta_imaging = {{0, 1.0}, {1, -1.0}, {2, 1.0}, {3, -1.0}, {4, 1.0}};
  s.censoring_target = 0.35;
  return s;
}

SimulationSpec planted_association_spec(int n, int p, int q, int active, double snr) {
  SimulationSpec s;
  s.n = n;
  s.p_imaging = p;
  s.q_expression = q;
  s.clinical = false;
  s.snr = snr;
  for (int g = 0; g < active; ++g) {
    s.eta.push_back({g, g, 1.0});
    s.eta.push_back({g + active < p ? g + active : g, g, -0.7});
  }
  s.censoring_target = 0.35;
  return s;
}

}  // namespace hdsurv::testing
