#pragma once

#include <cstdio>
#include <string>

namespace sfdqn {

/// Shortest round-trip text for a double; fixed across runs and platforms with IEEE doubles.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kCsvVersionLine = "# sfdqn-csv v1";

}  // namespace sfdqn
