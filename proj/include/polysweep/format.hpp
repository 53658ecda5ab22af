#pragma once

#include <cstdio>
#include <string>

namespace polysweep {

/// Round-trippable decimal form used in every CSV writer.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace polysweep
