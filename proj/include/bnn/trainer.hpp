#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "bnn/dataset.hpp"
#include "bnn/objective.hpp"

namespace bnn {

enum class OptimizerKind { sgd, sgd_momentum };

inline const char* to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "sgd-momentum";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "sgd-momentum" || s == "momentum") return OptimizerKind::sgd_momentum;
    throw std::invalid_argument("optimizer: unknown kind '" + s + "'");
}

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double momentum = 0.9;   // sgd-momentum only
    double clip_norm = 0.0;  // 0 disables global-norm clipping
    ElboConfig elbo;
};

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate >= 0.0))
        throw std::invalid_argument("train config: learning-rate must be non-negative");
    if (cfg.batch_size < 1) throw std::invalid_argument("train config: batch-size must be >= 1");
    if (cfg.optimizer == OptimizerKind::sgd_momentum &&
        !(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw std::invalid_argument("train config: momentum must be in [0, 1)");
    validate(cfg.elbo);
}

struct EpochRecord {
    double total = 0.0;
    double nll = 0.0;
    double kl = 0.0;
    double wall_seconds = 0.0;
};

struct TrainTrace {
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    std::string divergence_reason;
};

/// Per-parameter velocity buffers for sgd-momentum, keyed by storage and kept
/// in first-seen order so updates are applied deterministically.
struct OptimizerState {
    std::vector<Tensor*> order;
    std::unordered_map<Tensor*, Tensor> velocity;

    Tensor& velocity_for(Tensor* p) {
        auto it = velocity.find(p);
        if (it == velocity.end()) {
            order.push_back(p);
            it = velocity.emplace(p, Tensor::zeros(p->shape())).first;
        }
        return it->second;
    }
};

namespace detail {

struct AccumulatedGrad {
    Tensor* param;
    Tensor grad;
    std::string name;
};

/// Folds leaf gradients back onto parameter storage. A parameter bound more
/// than once (one leaf per Monte Carlo pass) gets the sum of its leaves.
inline std::vector<AccumulatedGrad> accumulate_gradients(const TapeBinding& binding,
                                                         const GradientMap& grads) {
    std::vector<AccumulatedGrad> acc;
    std::unordered_map<Tensor*, std::size_t> slot;
    for (const ParamRef& ref : binding) {
        auto git = grads.find(ref.leaf_id);
        auto sit = slot.find(ref.param);
        if (sit == slot.end()) {
            slot.emplace(ref.param, acc.size());
            Tensor g = git != grads.end() ? git->second : Tensor::zeros(ref.param->shape());
            acc.push_back({ref.param, std::move(g), ref.name});
        } else if (git != grads.end()) {
            Tensor& g = acc[sit->second].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += git->second[i];
        }
    }
    return acc;
}

}  // namespace detail

/// One Bayes-By-Backprop iteration: draw noise, reparametrize, evaluate the
/// negative-ELBO estimate, backpropagate to the variational (and plain)
/// parameters, apply the gradient update. Returns the pre-update estimate.
/// A non-finite gradient aborts before any parameter is touched.
inline ElboEstimate bbb_step(Model& model, const Tensor& batch_x, const Tensor& batch_y,
                             const std::vector<std::size_t>& labels, const TrainConfig& cfg,
                             RngStream& rng, OptimizerState* state = nullptr) {
    validate(cfg);
    Tape tape;
    NoiseSource noise(rng);
    ElboBuild build = build_negative_elbo(tape, model, batch_x, batch_y, labels, cfg.elbo, noise);
    const ElboEstimate estimate = build.estimate(tape);
    GradientMap grads = tape.backward(build.total);

    std::vector<detail::AccumulatedGrad> acc = detail::accumulate_gradients(build.binding, grads);
    for (const auto& a : acc)
        if (!a.grad.all_finite())
            throw std::runtime_error("bbb_step: non-finite gradient in " + a.name +
                                     "; no update applied");

    if (cfg.clip_norm > 0.0) {
        double norm2 = 0.0;
        for (const auto& a : acc)
            for (double g : a.grad.data()) norm2 += g * g;
        const double norm = std::sqrt(norm2);
        if (norm > cfg.clip_norm) {
            const double f = cfg.clip_norm / norm;
            for (auto& a : acc)
                for (double& g : a.grad.data()) g *= f;
        }
    }

    const double lr = cfg.learning_rate;
    for (auto& a : acc) {
        if (cfg.optimizer == OptimizerKind::sgd_momentum) {
            if (!state)
                throw std::logic_error("bbb_step: sgd-momentum needs an OptimizerState");
            Tensor& v = state->velocity_for(a.param);
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = cfg.momentum * v[i] + a.grad[i];
                (*a.param)[i] -= lr * v[i];
            }
        } else {
            for (std::size_t i = 0; i < a.grad.size(); ++i) (*a.param)[i] -= lr * a.grad[i];
        }
    }
    return estimate;
}

namespace detail {

inline void slice_batch(const Dataset& ds, const std::vector<std::size_t>& order,
                        std::size_t begin, std::size_t count, Tensor& x, Tensor& y,
                        std::vector<std::size_t>& labels) {
    x = Tensor({count, ds.width()});
    y = Tensor({count});
    labels.clear();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        for (std::size_t j = 0; j < ds.width(); ++j) x(i, j) = ds.features(src, j);
        y[i] = ds.targets[src];
        if (ds.task == TaskKind::classification) labels.push_back(ds.labels[src]);
    }
}

}  // namespace detail

/// Runs the BBB loop over the dataset: per-epoch seeded shuffle, minibatch
/// steps (last incomplete batch kept), per-epoch mean losses recorded. The
/// model is mutated in place. Divergence (non-finite or loss > 1e12) aborts
/// early; the trace up to the failure is returned with the reason.
inline TrainTrace train(Model& model, const Dataset& dataset, const TrainConfig& cfg) {
    validate(cfg);
    if (dataset.size() == 0) throw std::invalid_argument("train: dataset is empty");
    if (dataset.width() != model.input_width())
        throw std::invalid_argument("train: dataset width " + std::to_string(dataset.width()) +
                                    " does not match model input width " +
                                    std::to_string(model.input_width()));

    RngStream master(cfg.seed);
    RngStream shuffle_rng = master.split(1);
    RngStream noise_rng = master.split(2);
    OptimizerState state;

    TrainTrace trace;
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    Tensor bx, by;
    std::vector<std::size_t> blabels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        double sum_total = 0.0, sum_nll = 0.0, sum_kl = 0.0;
        std::size_t steps = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - begin);
            detail::slice_batch(dataset, order, begin, count, bx, by, blabels);
            ElboEstimate est;
            try {
                est = bbb_step(model, bx, by, blabels, cfg, noise_rng, &state);
            } catch (const std::exception& e) {
                trace.diverged = true;
                trace.divergence_reason =
                    "epoch " + std::to_string(epoch + 1) + ": " + e.what();
                return trace;
            }
            if (!std::isfinite(est.total) || est.total > 1e12) {
                trace.diverged = true;
                trace.divergence_reason = "epoch " + std::to_string(epoch + 1) +
                                          ": loss diverged (total=" + std::to_string(est.total) +
                                          ")";
                return trace;
            }
            sum_total += est.total;
            sum_nll += est.nll;
            sum_kl += est.kl;
            ++steps;
        }
        const auto t1 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.total = sum_total / static_cast<double>(steps);
        rec.nll = sum_nll / static_cast<double>(steps);
        rec.kl = sum_kl / static_cast<double>(steps);
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        trace.epochs.push_back(rec);
    }
    return trace;
}

}  // namespace bnn
