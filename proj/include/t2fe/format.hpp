#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace t2fe {

/// Locale-independent text for a double: %.17g round-trips exactly, NaN is
/// written as "nan". Report writers use this so output bytes are stable.
inline std::string format_number(double v, int precision = 17) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

}  // namespace t2fe
