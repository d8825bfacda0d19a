#pragma once

// Shared test oracles. These stay independent of the library code paths they
// check: finite differences against reverse-mode, a hand-rolled KS statistic,
// a from-scratch report-line parser, and a naive least-squares solve.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn_test {

/// Central finite differences of f w.r.t. every entry of `param`,
/// perturbing it in place.
inline bnn::Tensor finite_diff_grad(const std::function<double()>& f, bnn::Tensor& param,
                                    double step = 1e-5) {
    bnn::Tensor grad(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + step;
        const double fp = f();
        param[i] = saved - step;
        const double fm = f();
        param[i] = saved;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

/// Max relative error between gradients; near-zero pairs compare absolutely.
inline double max_grad_error(const bnn::Tensor& a, const bnn::Tensor& b,
                             double abs_floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = std::abs(a[i] - b[i]);
        if (diff < abs_floor) continue;
        worst = std::max(worst, diff / std::max(std::abs(a[i]), std::abs(b[i])));
    }
    return worst;
}

/// Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
        d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    }
    return d;
}

inline double half_normal_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(x / std::sqrt(2.0)); }

inline double std_normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Parses "Prediction mean: M, stddev: S, 95% CI: [H - L] - Actual: A".
struct ParsedReportLine {
    double mean, stddev, ci_high, ci_low, actual;
    bool ok = false;
};

inline ParsedReportLine parse_report_line(const std::string& line) {
    ParsedReportLine p{};
    const int matched =
        std::sscanf(line.c_str(),
                    "Prediction mean: %lf, stddev: %lf, 95%% CI: [%lf - %lf] - Actual: %lf",
                    &p.mean, &p.stddev, &p.ci_high, &p.ci_low, &p.actual);
    p.ok = matched == 5;
    return p;
}

/// Ordinary least squares for y = w x + b on 1-d inputs (normal equations).
struct LeastSquaresFit {
    double w = 0.0;
    double b = 0.0;
};

inline LeastSquaresFit least_squares_1d(const bnn::Tensor& x, const bnn::Tensor& y) {
    const double n = static_cast<double>(y.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double xi = x[i];
        sx += xi;
        sy += y[i];
        sxx += xi * xi;
        sxy += xi * y[i];
    }
    LeastSquaresFit fit;
    fit.w = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.b = (sy - fit.w * sx) / n;
    return fit;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace bnn_test
