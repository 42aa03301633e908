#pragma once

// Helpers shared by the unit and acceptance suites.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdsurv/cox.hpp"
#include "hdsurv/oracle/reference.hpp"
#include "hdsurv/simulate.hpp"

namespace hdsurv::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Unscaled problem on an oracle instance.
CoxProblem problem_of(const oracle::Instance& inst, Eigen::VectorXd penalty_factors = {});

/// Regular files under `dir` (relative path -> bytes), optionally skipping names.
std::vector<std::pair<std::string, std::string>> directory_contents(const std::filesystem::path& dir,
                                                                    const std::vector<std::string>& skip = {});

/// Survival simulation with 5 true imaging effects of +-1 among p features.
SimulationSpec strong_signal_spec(int n, int p, double rho);

/// Imaging features X = eta Z + noise with `active` genes linked to the first features.
SimulationSpec planted_association_spec(int n, int p, int q, int active, double snr);

}  // namespace hdsurv::testing
