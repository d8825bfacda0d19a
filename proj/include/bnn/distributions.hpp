#pragma once

#include <cmath>
#include <stdexcept>

#include "bnn/autodiff.hpp"
#include "bnn/math.hpp"
#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

/// N(0, sigma^2 I) prior over a block of N parameters.
struct IsotropicGaussianPrior {
    double sigma = 1.0;
    std::size_t dimension = 0;

    IsotropicGaussianPrior(double sigma_, std::size_t dimension_)
        : sigma(sigma_), dimension(dimension_) {
        if (!(sigma > 0.0)) throw std::domain_error("prior: sigma must be positive");
        if (dimension == 0) throw std::invalid_argument("prior: dimension must be positive");
    }
};

/// Fully factorized Gaussian variational posterior. The scale is always
/// derived as sigma_i = softplus(rho_i), never stored raw, so it stays
/// positive under unconstrained gradient updates.
struct DiagonalGaussian {
    Tensor mu;
    Tensor rho;

    std::size_t dim() const { return mu.size(); }

    Tensor sigma() const {
        Tensor s = rho;
        for (double& x : s.data()) x = softplus(x);
        return s;
    }
};

/// Variational posterior that is uniform in direction and half-normal in
/// radius in the sigma-scaled coordinates. Same parameter layout as the
/// mean-field family; only the sampling (and entropy) differ.
struct RadialPosterior {
    Tensor mu;
    Tensor rho;

    RadialPosterior(Tensor mu_, Tensor rho_) : mu(std::move(mu_)), rho(std::move(rho_)) {
        if (mu.size() < 2)
            throw std::invalid_argument(
                "radial posterior: needs at least 2 dimensions (direction "
                "normalization is degenerate at N = 1)");
        if (!mu.same_shape(rho))
            throw std::invalid_argument("radial posterior: mu/rho shape mismatch");
    }

    std::size_t dim() const { return mu.size(); }

    Tensor sigma() const {
        Tensor s = rho;
        for (double& x : s.data()) x = softplus(x);
        return s;
    }
};

/// One recorded draw of non-variational noise. Keeping the draw around makes
/// the sampling path replayable, which the common-random-number gradient
/// checks rely on.
struct NoiseDraw {
    Tensor epsilon;
    double radius = 0.0;  // used by the radial family only
};

inline NoiseDraw draw_meanfield_noise(std::size_t n, RngStream& rng) {
    return NoiseDraw{rng.normal_tensor({n}), 0.0};
}

/// Draws (epsilon, radius) for the radial family; radius = |r*|, r* ~ N(0,1).
/// A zero-norm epsilon is redrawn rather than ever reaching a division.
inline NoiseDraw draw_radial_noise(std::size_t n, RngStream& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Tensor eps = rng.normal_tensor({n});
        double norm2 = 0.0;
        for (double x : eps.data()) norm2 += x * x;
        if (norm2 > 0.0) return NoiseDraw{std::move(eps), std::abs(rng.normal())};
    }
    throw std::runtime_error("draw_radial_noise: repeated zero-norm draws");
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

/// theta_i = mu_i + softplus(rho_i) * eps_i.
inline Tensor gaussian_sample_reparam(const DiagonalGaussian& q, const NoiseDraw& noise) {
    if (noise.epsilon.size() != q.dim())
        throw std::invalid_argument("gaussian_sample_reparam: noise dimension " +
                                    std::to_string(noise.epsilon.size()) + " vs posterior " +
                                    std::to_string(q.dim()));
    Tensor theta = q.mu;
    for (std::size_t i = 0; i < theta.size(); ++i)
        theta[i] += softplus(q.rho[i]) * noise.epsilon[i];
    return theta;
}

/// Sum over i of log N(x_i; mu_i, sigma_i^2).
inline double gaussian_log_prob(const Tensor& x, const Tensor& mu, const Tensor& sigma) {
    if (!x.same_shape(mu) || !x.same_shape(sigma))
        throw std::invalid_argument("gaussian_log_prob: shape mismatch " + x.shape_string() +
                                    " / " + mu.shape_string() + " / " + sigma.shape_string());
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw std::domain_error("gaussian_log_prob: sigma must be positive");
        const double z = (x[i] - mu[i]) / sigma[i];
        lp += -0.5 * kLog2Pi - std::log(sigma[i]) - 0.5 * z * z;
    }
    return lp;
}

/// Prior-posterior cross-entropy term, sum_i (mu_i^2 + sigma_i^2) / (2 s^2).
/// With a unit prior this is the first term of the closed-form objective.
inline double meanfield_cross_entropy_term(const DiagonalGaussian& q, double prior_sigma) {
    double t = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double s = softplus(q.rho[i]);
        t += (q.mu[i] * q.mu[i] + s * s) / (2.0 * prior_sigma * prior_sigma);
    }
    return t;
}

/// Posterior entropy term, sum_i log sigma_i (additive constants dropped).
inline double meanfield_entropy_term(const DiagonalGaussian& q) {
    double t = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) t += std::log(softplus(q.rho[i]));
    return t;
}

/// Exact KL(q || p) for diagonal-Gaussian q against an isotropic prior:
/// sum_i [ log(s/sigma_i) + (sigma_i^2 + mu_i^2) / (2 s^2) - 1/2 ].
inline double kl_diag_vs_isotropic(const DiagonalGaussian& q, const IsotropicGaussianPrior& p) {
    if (q.dim() != p.dimension)
        throw std::invalid_argument("kl_diag_vs_isotropic: dimension mismatch " +
                                    std::to_string(q.dim()) + " vs " +
                                    std::to_string(p.dimension));
    const double log_s = std::log(p.sigma);
    double kl = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double sig = softplus(q.rho[i]);
        kl += log_s - std::log(sig) +
              (sig * sig + q.mu[i] * q.mu[i]) / (2.0 * p.sigma * p.sigma) - 0.5;
    }
    return kl;
}

/// theta = mu + softplus(rho) (.) (eps / ||eps||) * r.
inline Tensor radial_sample(const RadialPosterior& q, const NoiseDraw& noise) {
    if (noise.epsilon.size() != q.dim())
        throw std::invalid_argument("radial_sample: noise dimension " +
                                    std::to_string(noise.epsilon.size()) + " vs posterior " +
                                    std::to_string(q.dim()));
    double norm2 = 0.0;
    for (double x : noise.epsilon.data()) norm2 += x * x;
    if (norm2 == 0.0)
        throw std::invalid_argument("radial_sample: zero-norm noise; redraw it");
    const double inv_norm = 1.0 / std::sqrt(norm2);
    Tensor theta = q.mu;
    for (std::size_t i = 0; i < theta.size(); ++i)
        theta[i] += softplus(q.rho[i]) * noise.epsilon[i] * inv_norm * noise.radius;
    return theta;
}

/// Single-sample KL surrogate for the radial family:
///   [- sum_i log sigma_i] - log N(sample; 0, s^2 I).
/// The radial entropy equals sum_i log sigma_i plus a constant independent of
/// (mu, rho); the constant is dropped, so this matches the true KL only up to
/// an additive constant but has the right gradients.
inline double radial_kl_estimate(const RadialPosterior& q, const IsotropicGaussianPrior& p,
                                 const Tensor& sample) {
    if (q.dim() != p.dimension || sample.size() != q.dim())
        throw std::invalid_argument("radial_kl_estimate: dimension mismatch");
    double entropy_term = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) entropy_term += std::log(softplus(q.rho[i]));
    const Tensor zero = Tensor::zeros(sample.shape());
    const Tensor s = Tensor::full(sample.shape(), p.sigma);
    return -entropy_term - gaussian_log_prob(sample, zero, s);
}

// ---------------------------------------------------------------------------
// Tape-level builders (same math, differentiable w.r.t. mu and rho)
// ---------------------------------------------------------------------------

inline Value gaussian_sample_reparam(Tape& tape, Value mu, Value rho, const NoiseDraw& noise) {
    Value sigma = tape.softplus_op(rho);
    Value eps = tape.constant(noise.epsilon);
    return tape.add(mu, tape.mul(sigma, eps));
}

inline Value radial_sample(Tape& tape, Value mu, Value rho, const NoiseDraw& noise) {
    double norm2 = 0.0;
    for (double x : noise.epsilon.data()) norm2 += x * x;
    if (norm2 == 0.0)
        throw std::invalid_argument("radial_sample: zero-norm noise; redraw it");
    const double f = noise.radius / std::sqrt(norm2);
    Tensor scaled_dir = noise.epsilon;
    for (double& x : scaled_dir.data()) x *= f;
    Value sigma = tape.softplus_op(rho);
    return tape.add(mu, tape.mul(sigma, tape.constant(std::move(scaled_dir))));
}

inline Value kl_diag_vs_isotropic(Tape& tape, Value mu, Value rho,
                                  const IsotropicGaussianPrior& p) {
    const double n = static_cast<double>(p.dimension);
    const double inv_2s2 = 1.0 / (2.0 * p.sigma * p.sigma);
    Value sigma = tape.softplus_op(rho);
    Value quad = tape.scale(tape.add(tape.mul(sigma, sigma), tape.mul(mu, mu)), inv_2s2);
    Value elem = tape.sub(quad, tape.log_op(sigma));
    return tape.add_scalar(tape.sum(elem), n * (std::log(p.sigma) - 0.5));
}

inline Value radial_kl_estimate(Tape& tape, Value rho, Value sample,
                                const IsotropicGaussianPrior& p) {
    const double n = static_cast<double>(p.dimension);
    Value entropy = tape.sum(tape.log_op(tape.softplus_op(rho)));
    Value quad = tape.scale(tape.sum(tape.mul(sample, sample)),
                            1.0 / (2.0 * p.sigma * p.sigma));
    Value cross = tape.add_scalar(quad, n * (0.5 * kLog2Pi + std::log(p.sigma)));
    return tape.sub(cross, entropy);
}

// ---------------------------------------------------------------------------
// Initialization defaults
// ---------------------------------------------------------------------------

inline constexpr double kInitMuStddev = 0.1;
inline constexpr double kInitPosteriorSigma = 0.05;

/// Default variational initialization: mu ~ N(0, 0.1^2), sigma = 0.05. The
/// small initial scale keeps early gradient variance from exploding while
/// the means find the data.
inline DiagonalGaussian init_diagonal_gaussian(std::size_t n, RngStream& rng) {
    DiagonalGaussian q;
    q.mu = rng.normal_tensor({n}, 0.0, kInitMuStddev);
    q.rho = Tensor::full({n}, softplus_inverse(kInitPosteriorSigma));
    return q;
}

}  // namespace bnn
