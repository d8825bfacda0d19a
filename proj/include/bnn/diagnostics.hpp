#pragma once

#include <iostream>
#include <vector>

#include "bnn/math.hpp"
#include "bnn/model.hpp"

namespace bnn {

/// Per-layer statistics of pre-activation unit values under the prior.
struct PriorUnitStats {
    std::vector<double> excess_kurtosis;  // one entry per probed layer
    std::vector<double> mean;
    std::vector<std::size_t> width;
};

/// Samples `n_samples` networks from the prior (every weight and bias drawn
/// N(0, prior_sigma^2); deterministic layers are probed with the default unit
/// prior), forward-propagates one fixed probe input, and reports the
/// empirical excess kurtosis of the pre-activation values at layers
/// 1..depth, pooled across units. Gaussian units give 0; heavier tails grow
/// with depth.
inline PriorUnitStats prior_unit_diagnostic(const ModelSpec& spec, std::size_t depth,
                                            std::size_t n_samples, RngStream& rng,
                                            const Tensor* probe_override = nullptr) {
    validate_spec(spec);
    if (depth < 1 || depth > spec.layers.size())
        throw std::invalid_argument("prior_unit_diagnostic: depth must be in [1, " +
                                    std::to_string(spec.layers.size()) + "]");
    if (n_samples < 4)
        throw std::invalid_argument("prior_unit_diagnostic: need at least 4 samples");
    if (n_samples < 1000)
        std::cerr << "prior_unit_diagnostic: warning: only " << n_samples
                  << " samples; kurtosis estimates are unreliable below 1000\n";

    // Probe drawn once and fixed across all sampled networks.
    Tensor probe = probe_override ? *probe_override : rng.normal_tensor({1, spec.input_width});
    if (probe.rank() != 2 || probe.cols() != spec.input_width)
        throw std::invalid_argument("prior_unit_diagnostic: probe must be [1 x input-width]");

    std::vector<std::vector<double>> preacts(depth);
    for (std::size_t l = 0; l < depth; ++l)
        preacts[l].reserve(n_samples * spec.layers[l].units);

    for (std::size_t s = 0; s < n_samples; ++s) {
        Tensor h = probe;
        std::size_t in = spec.input_width;
        for (std::size_t l = 0; l < depth; ++l) {
            const LayerSpec& ls = spec.layers[l];
            const double prior_sigma = ls.is_variational() ? ls.prior_sigma : 1.0;
            Tensor z({1, ls.units});
            for (std::size_t j = 0; j < ls.units; ++j) {
                double acc = rng.normal(0.0, prior_sigma);  // bias
                for (std::size_t k = 0; k < in; ++k)
                    acc += rng.normal(0.0, prior_sigma) * h(0, k);
                z(0, j) = acc;
                preacts[l].push_back(acc);
            }
            detail::apply_activation(z, ls.activation);
            h = std::move(z);
            in = ls.units;
        }
    }

    PriorUnitStats stats;
    for (std::size_t l = 0; l < depth; ++l) {
        stats.excess_kurtosis.push_back(excess_kurtosis(preacts[l]));
        stats.mean.push_back(mean_of(preacts[l]));
        stats.width.push_back(spec.layers[l].units);
    }
    return stats;
}

}  // namespace bnn
