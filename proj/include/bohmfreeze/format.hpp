#pragma once

#include <cstdio>
#include <string>

namespace bohmfreeze {

/// Text that round-trips a double exactly. Output files depend only
/// on the numbers, never on locale or stream state.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace bohmfreeze
