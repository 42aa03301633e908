#pragma once

#include <string>

namespace hdsurv {

/// Shortest text that parses back to the same double.
std::string format_exact(double v);

/// Report formatting: "%.6g", "NA" for NaN, "Inf"/"-Inf" for infinities.
std::string format_g6(double v);

}  // namespace hdsurv
