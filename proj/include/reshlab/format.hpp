#pragma once

// Deterministic number formatting for all text outputs.  Every CSV/dump
// writer goes through fmt_g17 so reruns produce byte-identical files.

#include <cstdio>
#include <string>

namespace reshlab {

inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string fmt_int(long long x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", x);
    return buf;
}

}  // namespace reshlab
