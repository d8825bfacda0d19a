#pragma once

#include <cmath>
#include <cstdint>

#include "bnn/tensor.hpp"

namespace bnn {

/// Splittable, seedable, counter-based random stream. The i-th output is a
/// pure function of (key, i), so copying a stream and replaying it yields
/// identical draws; that is what makes common-random-number gradient checks
/// and byte-identical training runs possible. Mixing is SplitMix64.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : key_(mix(seed ^ kGamma)) {}

    /// Derives an independent stream; distinct lanes give distinct keys.
    RngStream split(std::uint64_t lane) const {
        RngStream s(*this);
        s.key_ = mix(key_ ^ mix(lane + kGamma));
        s.counter_ = 0;
        return s;
    }

    std::uint64_t next_u64() { return mix(key_ + kGamma * ++counter_); }

    /// Uniform draw in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform draw in (0, 1]; safe as a log argument.
    double uniform_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (cosine branch).
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    Tensor normal_tensor(std::vector<std::size_t> shape, double mu = 0.0, double sigma = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : t.data()) x = normal(mu, sigma);
        return t;
    }

    std::uint64_t key() const { return key_; }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace bnn
