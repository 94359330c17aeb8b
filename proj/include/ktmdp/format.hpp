#pragma once

#include <cstdio>
#include <string>

namespace ktmdp {

/// Decimal form with 17 significant digits. Every finite IEEE 754 double
/// round-trips exactly through strtod, which is what keeps saved grids and
/// CSV artifacts bit-reproducible.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace ktmdp
