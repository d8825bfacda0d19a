#pragma once

#include <string>
#include <vector>

#include "bnn/model.hpp"

namespace bnn {

/// Floor added to the predicted observation scale; keeps the Gaussian head's
/// density from blowing up as the learned sigma approaches zero.
inline constexpr double kHeadSigmaFloor = 1e-6;
/// Floor inside the categorical log.
inline constexpr double kProbFloor = 1e-12;

struct ElboConfig {
    double kl_weight = 1.0;
    std::size_t n_mc_samples = 1;

    static ElboConfig for_train_size(std::size_t n, std::size_t mc_samples = 1) {
        return ElboConfig{1.0 / static_cast<double>(n), mc_samples};
    }
};

inline void validate(const ElboConfig& cfg) {
    if (!(cfg.kl_weight >= 0.0))
        throw std::invalid_argument("elbo config: kl-weight must be non-negative");
    if (cfg.n_mc_samples < 1)
        throw std::invalid_argument("elbo config: n-mc-samples must be at least 1");
}

/// Decomposed loss; total = nll + kl_weight * kl holds exactly by
/// construction (the tape computes it as that sum).
struct ElboEstimate {
    double nll = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

/// Mean over the batch of -log N(target; mean, sigma^2) where column 0 of
/// `raw` is the predicted mean and column 1 the pre-softplus scale.
inline Value gaussian_nll_head(Tape& tape, Value raw, const Tensor& targets) {
    const Tensor& rv = tape.value(raw);
    if (rv.rank() != 2 || rv.cols() != 2)
        throw std::invalid_argument("gaussian_nll_head: expected [batch x 2] outputs, got " +
                                    rv.shape_string());
    if (targets.size() != rv.rows())
        throw std::invalid_argument("gaussian_nll_head: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(rv.rows()) + " outputs");
    if (!rv.all_finite())
        throw std::runtime_error("gaussian_nll_head: non-finite raw outputs");

    Value mean_col = tape.slice_col(raw, 0);
    Value sigma = tape.add_scalar(tape.softplus_op(tape.slice_col(raw, 1)), kHeadSigmaFloor);
    Value diff = tape.sub(tape.constant(targets), mean_col);
    Value quad = tape.div(tape.mul(diff, diff), tape.scale(tape.mul(sigma, sigma), 2.0));
    Value per_example = tape.add_scalar(tape.add(tape.log_op(sigma), quad), 0.5 * kLog2Pi);
    return tape.mean(per_example);
}

/// Mean over the batch of -log p[label], with a 1e-12 floor inside the log.
/// Rows of `probabilities` must already sum to one.
inline Value categorical_nll(Tape& tape, Value probabilities, const std::vector<std::size_t>& labels) {
    const Tensor& pv = tape.value(probabilities);
    if (pv.rank() != 2)
        throw std::invalid_argument("categorical_nll: expected [batch x C] probabilities");
    for (std::size_t i = 0; i < pv.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < pv.cols(); ++j) s += pv(i, j);
        if (std::abs(s - 1.0) > 1e-8)
            throw std::invalid_argument("categorical_nll: row " + std::to_string(i) +
                                        " sums to " + std::to_string(s) + ", not 1");
    }
    Value picked = tape.gather_rows(probabilities, labels);
    return tape.scale(tape.mean(tape.log_op(tape.clamp_min(picked, kProbFloor))), -1.0);
}

struct ElboBuild {
    Value total;
    Value nll;
    Value kl;
    TapeBinding binding;
    std::vector<NoiseDraw> noise;  // recorded draws when sampling fresh

    ElboEstimate estimate(const Tape& tape) const {
        return ElboEstimate{tape.value(nll)[0], tape.value(kl)[0], tape.value(total)[0]};
    }
};

/// Builds the negative-ELBO estimate on the tape: `n_mc_samples` independent
/// sampled forward passes, nll averaged across them, kl the mean of the
/// per-pass sums of layer contributions (identical across draws for the
/// closed-form mean-field family).
inline ElboBuild build_negative_elbo(Tape& tape, Model& model, const Tensor& batch_x,
                                     const Tensor& batch_y, const std::vector<std::size_t>& labels,
                                     const ElboConfig& cfg, NoiseSource& noise) {
    validate(cfg);
    if (batch_x.rank() != 2 || batch_x.rows() == 0)
        throw std::invalid_argument("negative_elbo: batch must be a non-empty [n x d] tensor");
    if (model.spec.head.kind == HeadKind::categorical && labels.size() != batch_x.rows())
        throw std::invalid_argument("negative_elbo: need one label per batch row");

    ElboBuild build;
    Value x = tape.constant(batch_x);
    std::optional<Value> nll_acc, kl_acc;

    for (std::size_t s = 0; s < cfg.n_mc_samples; ++s) {
        try {
            ModelTapePass pass = model_forward_on_tape(tape, model, x, noise, build.binding);
            Value sample_nll;
            if (model.spec.head.kind == HeadKind::gaussian) {
                sample_nll = gaussian_nll_head(tape, pass.output, batch_y);
            } else {
                Value probs = model.spec.layers.back().activation == Activation::softmax_rows
                                  ? pass.output
                                  : tape.softmax_rows(pass.output);
                sample_nll = categorical_nll(tape, probs, labels);
            }
            nll_acc = nll_acc ? tape.add(*nll_acc, sample_nll) : sample_nll;
            if (pass.kl) kl_acc = kl_acc ? tape.add(*kl_acc, *pass.kl) : *pass.kl;
        } catch (const std::exception& e) {
            throw std::runtime_error("negative_elbo: mc sample " + std::to_string(s) + ": " +
                                     e.what());
        }
    }

    const double inv_s = 1.0 / static_cast<double>(cfg.n_mc_samples);
    build.nll = cfg.n_mc_samples == 1 ? *nll_acc : tape.scale(*nll_acc, inv_s);
    build.kl = kl_acc ? (cfg.n_mc_samples == 1 ? *kl_acc : tape.scale(*kl_acc, inv_s))
                      : tape.constant(Tensor::scalar(0.0));
    build.total = tape.add(build.nll, tape.scale(build.kl, cfg.kl_weight));
    build.noise = noise.take_recorded();
    return build;
}

/// Value-only convenience wrapper.
inline ElboEstimate negative_elbo(Model& model, const Tensor& batch_x, const Tensor& batch_y,
                                  const std::vector<std::size_t>& labels, const ElboConfig& cfg,
                                  RngStream& rng) {
    Tape tape;
    NoiseSource noise(rng);
    ElboBuild build = build_negative_elbo(tape, model, batch_x, batch_y, labels, cfg, noise);
    return build.estimate(tape);
}

}  // namespace bnn
