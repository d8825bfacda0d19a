#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "bnn/model.hpp"
#include "bnn/objective.hpp"

namespace bnn {

/// Monte Carlo posterior predictive for one example: mean, total stddev
/// (epistemic + aleatoric), and the central 95% interval mean +- 1.96 sigma.
struct PredictiveSummary {
    double mean = 0.0;
    double stddev = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_samples = 0;
};

inline constexpr double kCi95Z = 1.96;

/// How the 95% interval is produced: Gaussian (mean +- 1.96 sigma, the
/// convention the reference report arithmetic uses) or empirical 2.5%/97.5%
/// quantiles of simulated draws from the predictive mixture.
enum class IntervalKind { gaussian, empirical };

inline IntervalKind interval_from_string(const std::string& s) {
    if (s == "gaussian") return IntervalKind::gaussian;
    if (s == "empirical") return IntervalKind::empirical;
    throw std::invalid_argument("interval: unknown kind '" + s + "'");
}

namespace detail {

/// Linear-interpolated quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

/// Posterior predictive over every row of `x` from `n_samples` weight draws
/// (each draw shared across the batch). Predictive variance decomposes as
/// var(sampled means) + mean(sampled variances); the variance of means uses
/// the population convention so the decomposition is the exact variance of
/// the sampled mixture.
inline std::vector<PredictiveSummary> posterior_predictive_batch(const Model& model,
                                                                 const Tensor& x,
                                                                 std::size_t n_samples,
                                                                 RngStream& rng,
                                                                 IntervalKind interval) {
    if (model.spec.head.kind != HeadKind::gaussian)
        throw std::invalid_argument("posterior_predictive: model must have a gaussian head");
    if (n_samples < 2)
        throw std::invalid_argument("posterior_predictive: need at least 2 samples");
    if (x.rank() != 2 || x.cols() != model.input_width())
        throw std::invalid_argument("posterior_predictive: input " + x.shape_string() +
                                    " does not match model input width " +
                                    std::to_string(model.input_width()));

    const std::size_t n = x.rows();
    // Welford accumulators over the sampled means, plus the aleatoric sum.
    std::vector<double> mean(n, 0.0), m2(n, 0.0), var_sum(n, 0.0);
    std::vector<std::vector<double>> draws;
    if (interval == IntervalKind::empirical) draws.assign(n, {});
    for (std::size_t s = 0; s < n_samples; ++s) {
        NoiseSource noise(rng);
        Tensor out = model_forward_sampled(model, x, noise);
        if (!out.all_finite())
            throw std::runtime_error("posterior_predictive: non-finite network output "
                                     "(untrained or diverged parameters?)");
        for (std::size_t i = 0; i < n; ++i) {
            const double m_s = out(i, 0);
            const double sigma_s = softplus(out(i, 1)) + kHeadSigmaFloor;
            const double delta = m_s - mean[i];
            mean[i] += delta / static_cast<double>(s + 1);
            m2[i] += delta * (m_s - mean[i]);
            var_sum[i] += sigma_s * sigma_s;
            if (interval == IntervalKind::empirical)
                draws[i].push_back(rng.normal(m_s, sigma_s));
        }
    }

    std::vector<PredictiveSummary> summaries(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double epistemic = m2[i] / static_cast<double>(n_samples);
        const double aleatoric = var_sum[i] / static_cast<double>(n_samples);
        PredictiveSummary& ps = summaries[i];
        ps.mean = mean[i];
        ps.stddev = std::sqrt(epistemic + aleatoric);
        if (interval == IntervalKind::empirical) {
            std::sort(draws[i].begin(), draws[i].end());
            ps.ci_low = detail::sorted_quantile(draws[i], 0.025);
            ps.ci_high = detail::sorted_quantile(draws[i], 0.975);
        } else {
            ps.ci_low = ps.mean - kCi95Z * ps.stddev;
            ps.ci_high = ps.mean + kCi95Z * ps.stddev;
        }
        ps.n_samples = n_samples;
    }
    return summaries;
}

inline std::vector<PredictiveSummary> posterior_predictive_batch(const Model& model,
                                                                 const Tensor& x,
                                                                 std::size_t n_samples,
                                                                 RngStream& rng) {
    return posterior_predictive_batch(model, x, n_samples, rng, IntervalKind::gaussian);
}

inline PredictiveSummary posterior_predictive(const Model& model, const Tensor& x,
                                              std::size_t n_samples, RngStream& rng,
                                              IntervalKind interval = IntervalKind::gaussian) {
    return posterior_predictive_batch(model, x, n_samples, rng, interval).front();
}

/// Bayesian model average for classification: sampled probability vectors
/// averaged, then argmax and entropy of the averaged distribution.
struct ClassPredictiveSummary {
    std::vector<double> probabilities;
    std::size_t predicted = 0;
    double entropy = 0.0;
    std::size_t n_samples = 0;
};

inline std::vector<ClassPredictiveSummary> class_predictive_batch(const Model& model,
                                                                  const Tensor& x,
                                                                  std::size_t n_samples,
                                                                  RngStream& rng) {
    if (model.spec.head.kind != HeadKind::categorical)
        throw std::invalid_argument("class_predictive: model must have a categorical head");
    if (n_samples < 1) throw std::invalid_argument("class_predictive: need at least 1 sample");
    const std::size_t n = x.rows();
    const std::size_t c = model.spec.head.classes;
    const bool pre_softmaxed = model.spec.layers.back().activation == Activation::softmax_rows;

    std::vector<ClassPredictiveSummary> out(n);
    for (auto& s : out) s.probabilities.assign(c, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        NoiseSource noise(rng);
        Tensor raw = model_forward_sampled(model, x, noise);
        if (!pre_softmaxed) detail::apply_activation(raw, Activation::softmax_rows);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
                out[i].probabilities[j] += raw(i, j) / static_cast<double>(n_samples);
    }
    for (auto& s : out) {
        s.n_samples = n_samples;
        double best = -1.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (s.probabilities[j] > best) {
                best = s.probabilities[j];
                s.predicted = j;
            }
            if (s.probabilities[j] > 0.0) s.entropy -= s.probabilities[j] * std::log(s.probabilities[j]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report formatting
// ---------------------------------------------------------------------------

/// Rounds to 2 decimals and trims trailing zeros, keeping at least one
/// decimal place: 7.3124 -> "7.31", 6.0 -> "6.0", -0.001 -> "0.0".
inline std::string format_rounded(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    if (s == "-0.0") s = "0.0";
    return s;
}

/// One line per example, matching the report layout exactly:
///   Prediction mean: {m}, stddev: {s}, 95% CI: [{high} - {low}] - Actual: {a}
inline std::string format_prediction_report(const std::vector<PredictiveSummary>& summaries,
                                            const std::vector<double>& actuals) {
    if (summaries.size() != actuals.size())
        throw std::invalid_argument("format_prediction_report: " +
                                    std::to_string(summaries.size()) + " summaries vs " +
                                    std::to_string(actuals.size()) + " actuals");
    std::string out;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const PredictiveSummary& p = summaries[i];
        out += "Prediction mean: " + format_rounded(p.mean) +
               ", stddev: " + format_rounded(p.stddev) +
               ", 95% CI: [" + format_rounded(p.ci_high) + " - " + format_rounded(p.ci_low) +
               "] - Actual: " + format_rounded(actuals[i]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Calibration metrics
// ---------------------------------------------------------------------------

struct CalibrationMetrics {
    double rmse = 0.0;
    double nll = 0.0;
    double coverage95 = 0.0;
};

/// rmse of predictive means, mean Gaussian NLL under (mean, stddev), and the
/// fraction of actuals inside [ci_low, ci_high]. A zero stddev with a
/// mismatched actual yields the +infinity sentinel.
inline CalibrationMetrics calibration_metrics(const std::vector<PredictiveSummary>& summaries,
                                              const std::vector<double>& actuals) {
    if (summaries.empty() || summaries.size() != actuals.size())
        throw std::invalid_argument("calibration_metrics: need equal, non-empty inputs");
    const double n = static_cast<double>(summaries.size());
    double se = 0.0, nll = 0.0;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const PredictiveSummary& p = summaries[i];
        const double r = actuals[i] - p.mean;
        se += r * r;
        if (p.stddev > 0.0) {
            const double z = r / p.stddev;
            nll += 0.5 * kLog2Pi + std::log(p.stddev) + 0.5 * z * z;
        } else {
            // Degenerate predictive: a point mass. Wrong point -> +inf; exact
            // hit -> -inf (unbounded density).
            nll += r != 0.0 ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
        }
        if (actuals[i] >= p.ci_low && actuals[i] <= p.ci_high) ++covered;
    }
    return CalibrationMetrics{std::sqrt(se / n), nll / n, static_cast<double>(covered) / n};
}

}  // namespace bnn
