#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrir {

// Binary entropy in bits; h2(0) = h2(1) = 0 by continuity.
inline double binary_entropy(double p) {
    if (p < 0.0 || p > 1.0)
        throw std::domain_error("binary_entropy: p outside [0,1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Inverse of h2 on [0, 1/2]; bisection is plenty here (called off the
// hot path, for threshold tables only).
inline double binary_entropy_inv(double h) {
    if (h <= 0.0) return 0.0;
    if (h >= 1.0) return 0.5;
    double lo = 0.0, hi = 0.5;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (binary_entropy(mid) < h)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15) break;
    }
    return 0.5 * (lo + hi);
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace qrir
