#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hdsurv::oracle {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick oracle and KKT battery behind `hdsurv check`.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 20240601);

}  // namespace hdsurv::oracle
