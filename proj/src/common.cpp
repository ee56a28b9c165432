#include "mif/common.hpp"

#include <cstdio>
#include <cstdlib>

namespace mif {

std::string format_sig9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

double round_sig9(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(format_sig9(x).c_str(), nullptr);
}

}  // namespace mif
