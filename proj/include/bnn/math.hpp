#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bnn {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// softplus(x) = log(1 + exp(x)), evaluated in the branch form that never
/// overflows: for x > 0 it is x + log1p(exp(-x)).
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus: returns rho with softplus(rho) = y, y > 0.
inline double softplus_inverse(double y) {
    if (y <= 0.0) throw std::domain_error("softplus_inverse: argument must be positive");
    // log(exp(y) - 1); for large y the subtraction is a no-op.
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by n).
inline double stddev_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

/// Standard unbiased sample excess kurtosis (G2). Requires n >= 4.
inline double excess_kurtosis(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 4) throw std::invalid_argument("excess_kurtosis: need at least 4 samples");
    const double nn = static_cast<double>(n);
    const double m = mean_of(xs);
    double s2 = 0.0, s4 = 0.0;
    for (double x : xs) {
        const double d = x - m;
        const double d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    const double var_unbiased = s2 / (nn - 1.0);
    const double g = s4 / (var_unbiased * var_unbiased);
    return nn * (nn + 1.0) / ((nn - 1.0) * (nn - 2.0) * (nn - 3.0)) * g -
           3.0 * (nn - 1.0) * (nn - 1.0) / ((nn - 2.0) * (nn - 3.0));
}

}  // namespace bnn
