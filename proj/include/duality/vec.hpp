#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace duality {

using Vec = std::vector<double>;

/// Quantities consumed, one entry per good.
using Bundle = Vec;

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double sum(std::span<const double> a) { return std::accumulate(a.begin(), a.end(), 0.0); }

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline Vec scaled(std::span<const double> a, double t) {
    Vec out(a.begin(), a.end());
    for (double& v : out) v *= t;
    return out;
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// max_i |a_i - b_i| / max(1, |b_i|)
inline double relative_residual(std::span<const double> a, std::span<const double> b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        double d = std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i]));
        if (std::isnan(d)) return d;
        r = std::max(r, d);
    }
    if (a.size() != b.size()) return INFINITY;
    return r;
}

inline double relative_residual(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::abs(b));
}

} // namespace duality
