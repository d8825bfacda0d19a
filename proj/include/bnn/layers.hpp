#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bnn/autodiff.hpp"
#include "bnn/distributions.hpp"
#include "bnn/rng.hpp"

namespace bnn {

enum class PosteriorFamily { mean_field, radial };

inline const char* to_string(PosteriorFamily f) {
    return f == PosteriorFamily::mean_field ? "mean-field" : "radial";
}

inline PosteriorFamily posterior_family_from_string(const std::string& s) {
    if (s == "mean-field" || s == "meanfield" || s == "gaussian") return PosteriorFamily::mean_field;
    if (s == "radial") return PosteriorFamily::radial;
    throw std::invalid_argument("posterior family: unknown kind '" + s + "'");
}

namespace detail {

inline void apply_activation(Tensor& t, Activation act) {
    switch (act) {
        case Activation::identity:
            return;
        case Activation::relu:
            for (double& x : t.data()) x = x > 0.0 ? x : 0.0;
            return;
        case Activation::sigmoid:
            for (double& x : t.data()) x = sigmoid(x);
            return;
        case Activation::softplus:
            for (double& x : t.data()) x = softplus(x);
            return;
        case Activation::softmax_rows: {
            for (std::size_t i = 0; i < t.rows(); ++i) {
                double mx = t(i, 0);
                for (std::size_t j = 1; j < t.cols(); ++j) mx = std::max(mx, t(i, j));
                double z = 0.0;
                for (std::size_t j = 0; j < t.cols(); ++j) z += (t(i, j) = std::exp(t(i, j) - mx));
                for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) /= z;
            }
            return;
        }
    }
    throw std::invalid_argument("activation: unknown kind");
}

inline void check_width(const Tensor& h, std::size_t in, const char* who) {
    if (h.rank() != 2 || h.cols() != in)
        throw std::invalid_argument(std::string(who) + ": input " + h.shape_string() +
                                    " does not match layer width " + std::to_string(in));
}

}  // namespace detail

/// Supplies non-variational noise to a forward pass: either fresh draws from
/// a stream (recording them) or a replay of previously recorded draws. Replay
/// is what turns a stochastic forward into a deterministic function of the
/// variational parameters.
class NoiseSource {
public:
    explicit NoiseSource(RngStream& rng) : rng_(&rng) {}
    explicit NoiseSource(const std::vector<NoiseDraw>& replay) : replay_(&replay) {}

    NoiseDraw next(std::size_t n, PosteriorFamily family) {
        if (replay_) {
            if (cursor_ >= replay_->size())
                throw std::logic_error("NoiseSource: replay exhausted");
            const NoiseDraw& d = (*replay_)[cursor_++];
            if (d.epsilon.size() != n)
                throw std::invalid_argument("NoiseSource: replayed draw has dimension " +
                                            std::to_string(d.epsilon.size()) + ", expected " +
                                            std::to_string(n));
            return d;
        }
        NoiseDraw d = family == PosteriorFamily::radial ? draw_radial_noise(n, *rng_)
                                                        : draw_meanfield_noise(n, *rng_);
        record_.push_back(d);
        return d;
    }

    const std::vector<NoiseDraw>& recorded() const { return record_; }
    std::vector<NoiseDraw> take_recorded() { return std::move(record_); }

private:
    RngStream* rng_ = nullptr;
    const std::vector<NoiseDraw>* replay_ = nullptr;
    std::size_t cursor_ = 0;
    std::vector<NoiseDraw> record_;
};

/// One tape leaf per trainable tensor, so the optimizer can route gradients
/// back to storage.
struct ParamRef {
    std::uint32_t leaf_id;
    Tensor* param;
    std::string name;
};
using TapeBinding = std::vector<ParamRef>;

struct LayerForward {
    Value output;
    std::optional<Value> kl;
};

// ---------------------------------------------------------------------------
// Deterministic dense layer
// ---------------------------------------------------------------------------

struct DenseDeterministic {
    Tensor weights;  // [out x in]
    Tensor bias;     // [out]
    Activation act = Activation::identity;

    std::size_t in_width() const { return weights.cols(); }
    std::size_t out_width() const { return weights.rows(); }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

/// A(h W^T + b), rows independent.
inline Tensor dense_forward(const DenseDeterministic& layer, const Tensor& h) {
    detail::check_width(h, layer.in_width(), "dense_forward");
    Tensor z = detail::matmul_nt_plain(h, layer.weights);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias[j];
    detail::apply_activation(z, layer.act);
    return z;
}

inline LayerForward forward_on_tape(Tape& tape, DenseDeterministic& layer, Value h,
                                    TapeBinding& binding, std::size_t layer_index) {
    detail::check_width(tape.value(h), layer.in_width(), "dense_forward");
    const std::string prefix = "layer" + std::to_string(layer_index);
    Value w = tape.leaf(layer.weights);
    Value b = tape.leaf(layer.bias);
    binding.push_back({w.id, &layer.weights, prefix + ".weights"});
    binding.push_back({b.id, &layer.bias, prefix + ".bias"});
    Value out = tape.activation(tape.add_bias(tape.matmul_nt(h, w), b), layer.act);
    return LayerForward{out, std::nullopt};
}

// ---------------------------------------------------------------------------
// Variational dense layer
// ---------------------------------------------------------------------------

struct DenseVariational {
    DiagonalGaussian weight_posterior;  // flat, out*in entries
    DiagonalGaussian bias_posterior;    // out entries
    PosteriorFamily family = PosteriorFamily::mean_field;
    double prior_sigma = 1.0;
    Activation act = Activation::identity;
    std::size_t in = 0;
    std::size_t out = 0;

    std::size_t in_width() const { return in; }
    std::size_t out_width() const { return out; }
    // mu and rho per weight and bias entry: exactly double the deterministic count.
    std::size_t param_count() const { return 2 * (out * in + out); }

    IsotropicGaussianPrior weight_prior() const { return {prior_sigma, out * in}; }
    IsotropicGaussianPrior bias_prior() const { return {prior_sigma, out}; }
};

/// Draws one (W, b) via the layer's reparametrized sampler, shared across the
/// whole batch, and returns the activated output together with this layer's
/// KL contribution (closed form for mean-field, single-sample surrogate for
/// radial).
inline LayerForward forward_on_tape(Tape& tape, DenseVariational& layer, Value h,
                                    TapeBinding& binding, std::size_t layer_index,
                                    NoiseSource& noise) {
    detail::check_width(tape.value(h), layer.in_width(), "variational_forward");
    const std::string prefix = "layer" + std::to_string(layer_index);

    Value mu_w = tape.leaf(layer.weight_posterior.mu);
    Value rho_w = tape.leaf(layer.weight_posterior.rho);
    Value mu_b = tape.leaf(layer.bias_posterior.mu);
    Value rho_b = tape.leaf(layer.bias_posterior.rho);
    binding.push_back({mu_w.id, &layer.weight_posterior.mu, prefix + ".weight.mu"});
    binding.push_back({rho_w.id, &layer.weight_posterior.rho, prefix + ".weight.rho"});
    binding.push_back({mu_b.id, &layer.bias_posterior.mu, prefix + ".bias.mu"});
    binding.push_back({rho_b.id, &layer.bias_posterior.rho, prefix + ".bias.rho"});

    const NoiseDraw noise_w = noise.next(layer.out * layer.in, layer.family);
    const NoiseDraw noise_b = noise.next(layer.out, layer.family);

    Value theta_w_flat, theta_b, kl;
    if (layer.family == PosteriorFamily::mean_field) {
        theta_w_flat = gaussian_sample_reparam(tape, mu_w, rho_w, noise_w);
        theta_b = gaussian_sample_reparam(tape, mu_b, rho_b, noise_b);
        kl = tape.add(kl_diag_vs_isotropic(tape, mu_w, rho_w, layer.weight_prior()),
                      kl_diag_vs_isotropic(tape, mu_b, rho_b, layer.bias_prior()));
    } else {
        theta_w_flat = radial_sample(tape, mu_w, rho_w, noise_w);
        theta_b = radial_sample(tape, mu_b, rho_b, noise_b);
        kl = tape.add(radial_kl_estimate(tape, rho_w, theta_w_flat, layer.weight_prior()),
                      radial_kl_estimate(tape, rho_b, theta_b, layer.bias_prior()));
    }

    if (!tape.value(theta_w_flat).all_finite() || !tape.value(theta_b).all_finite())
        throw std::runtime_error("variational_forward: non-finite sampled weights in layer " +
                                 std::to_string(layer_index));

    Value w = tape.reshape(theta_w_flat, {layer.out, layer.in});
    Value out = tape.activation(tape.add_bias(tape.matmul_nt(h, w), theta_b), layer.act);
    return LayerForward{out, kl};
}

/// Value-level sampled forward (no tape): used by prediction and diagnostics.
inline Tensor forward_sampled(const DenseVariational& layer, const Tensor& h, NoiseSource& noise) {
    detail::check_width(h, layer.in_width(), "variational_forward");
    const NoiseDraw noise_w = noise.next(layer.out * layer.in, layer.family);
    const NoiseDraw noise_b = noise.next(layer.out, layer.family);

    Tensor w_flat, b;
    if (layer.family == PosteriorFamily::mean_field) {
        w_flat = gaussian_sample_reparam(layer.weight_posterior, noise_w);
        b = gaussian_sample_reparam(layer.bias_posterior, noise_b);
    } else {
        w_flat = radial_sample(RadialPosterior(layer.weight_posterior.mu, layer.weight_posterior.rho),
                               noise_w);
        b = radial_sample(RadialPosterior(layer.bias_posterior.mu, layer.bias_posterior.rho),
                          noise_b);
    }
    DenseDeterministic point{w_flat.reshaped({layer.out, layer.in}), std::move(b), layer.act};
    return dense_forward(point, h);
}

/// This layer's KL contribution at the current parameters (value level).
inline double layer_kl(const DenseVariational& layer) {
    if (layer.family != PosteriorFamily::mean_field)
        throw std::logic_error("layer_kl: closed form exists for mean-field only");
    return kl_diag_vs_isotropic(layer.weight_posterior, layer.weight_prior()) +
           kl_diag_vs_isotropic(layer.bias_posterior, layer.bias_prior());
}

}  // namespace bnn
