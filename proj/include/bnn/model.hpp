#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bnn/dataset.hpp"
#include "bnn/layers.hpp"

namespace bnn {

enum class HeadKind { gaussian, categorical };

/// Declarative description of a single layer.
struct LayerSpec {
    enum class Kind { dense, dense_variational };
    Kind kind = Kind::dense;
    std::size_t units = 0;
    Activation activation = Activation::sigmoid;
    // variational-only fields
    PosteriorFamily family = PosteriorFamily::mean_field;
    double prior_sigma = 1.0;

    bool is_variational() const { return kind == Kind::dense_variational; }
};

struct HeadSpec {
    HeadKind kind = HeadKind::gaussian;
    std::size_t classes = 0;  // categorical only
};

/// Declarative description of a (possibly hybrid) network: input width, an
/// ordered stack of dense layers, and a likelihood head.
struct ModelSpec {
    std::size_t input_width = 0;
    std::vector<LayerSpec> layers;
    HeadSpec head;
};

inline void validate_spec(const ModelSpec& spec) {
    if (spec.input_width == 0)
        throw std::invalid_argument("model spec: input-width must be positive");
    if (spec.layers.empty()) throw std::invalid_argument("model spec: at least one layer required");
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.units == 0)
            throw std::invalid_argument("model spec: layer " + std::to_string(i) +
                                        ": units must be positive");
        if (l.is_variational() && !(l.prior_sigma > 0.0))
            throw std::invalid_argument("model spec: layer " + std::to_string(i) +
                                        ": prior-sigma must be positive");
    }
    const std::size_t out = spec.layers.back().units;
    if (spec.head.kind == HeadKind::gaussian && out != 2)
        throw std::invalid_argument("model spec: gaussian head requires the final layer to have "
                                    "2 units (mean and pre-softplus scale), got " +
                                    std::to_string(out));
    if (spec.head.kind == HeadKind::categorical) {
        if (spec.head.classes < 2)
            throw std::invalid_argument("model spec: categorical head needs at least 2 classes");
        if (out != spec.head.classes)
            throw std::invalid_argument("model spec: categorical head with " +
                                        std::to_string(spec.head.classes) +
                                        " classes requires final layer units to match, got " +
                                        std::to_string(out));
    }
}

// ---------------------------------------------------------------------------
// Spec file format (JSON data model, one object per layer)
// ---------------------------------------------------------------------------

inline ModelSpec parse_model_spec(const nlohmann::json& j) {
    ModelSpec spec;
    spec.input_width = j.at("input-width").get<std::size_t>();

    const nlohmann::json& head = j.at("head");
    if (head.is_string()) {
        const std::string k = head.get<std::string>();
        if (k == "gaussian") {
            spec.head.kind = HeadKind::gaussian;
        } else {
            throw std::invalid_argument("model spec: unknown head '" + k + "'");
        }
    } else {
        const std::string k = head.at("kind").get<std::string>();
        if (k == "gaussian") {
            spec.head.kind = HeadKind::gaussian;
        } else if (k == "categorical") {
            spec.head.kind = HeadKind::categorical;
            spec.head.classes = head.at("classes").get<std::size_t>();
        } else {
            throw std::invalid_argument("model spec: unknown head '" + k + "'");
        }
    }

    const nlohmann::json& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const nlohmann::json& lj = layers[i];
        LayerSpec l;
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "dense") {
            l.kind = LayerSpec::Kind::dense;
        } else if (kind == "dense-variational") {
            l.kind = LayerSpec::Kind::dense_variational;
        } else {
            throw std::invalid_argument("model spec: layer " + std::to_string(i) +
                                        ": unknown kind '" + kind + "'");
        }
        l.units = lj.at("units").get<std::size_t>();
        if (lj.contains("activation")) {
            l.activation = activation_from_string(lj.at("activation").get<std::string>());
        } else {
            // hidden layers default to sigmoid, the final layer to identity
            l.activation = (i + 1 == layers.size()) ? Activation::identity : Activation::sigmoid;
        }
        if (l.kind == LayerSpec::Kind::dense) {
            if (lj.contains("posterior-family") || lj.contains("prior-sigma"))
                throw std::invalid_argument("model spec: layer " + std::to_string(i) +
                                            ": variational fields on a dense layer");
        } else {
            if (lj.contains("posterior-family"))
                l.family = posterior_family_from_string(lj.at("posterior-family").get<std::string>());
            if (lj.contains("prior-sigma")) l.prior_sigma = lj.at("prior-sigma").get<double>();
        }
        spec.layers.push_back(l);
    }
    validate_spec(spec);
    return spec;
}

inline nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["input-width"] = spec.input_width;
    if (spec.head.kind == HeadKind::gaussian) {
        j["head"] = {{"kind", "gaussian"}};
    } else {
        j["head"] = {{"kind", "categorical"}, {"classes", spec.head.classes}};
    }
    j["layers"] = nlohmann::json::array();
    for (const LayerSpec& l : spec.layers) {
        nlohmann::json lj;
        lj["kind"] = l.is_variational() ? "dense-variational" : "dense";
        lj["units"] = l.units;
        lj["activation"] = to_string(l.activation);
        if (l.is_variational()) {
            lj["posterior-family"] = to_string(l.family);
            lj["prior-sigma"] = l.prior_sigma;
        }
        j["layers"].push_back(lj);
    }
    return j;
}

inline ModelSpec parse_model_spec(const std::string& text) {
    return parse_model_spec(nlohmann::json::parse(text));
}

inline std::string serialize_model_spec(const ModelSpec& spec) { return to_json(spec).dump(2) + "\n"; }

inline ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("model spec: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return parse_model_spec(j);
}

// ---------------------------------------------------------------------------
// Runtime model
// ---------------------------------------------------------------------------

using Layer = std::variant<DenseDeterministic, DenseVariational>;

struct Model {
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::vector<Layer> layers;

    std::size_t input_width() const { return spec.input_width; }
    std::size_t output_width() const { return spec.layers.back().units; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers)
            n += std::visit([](const auto& x) { return x.param_count(); }, l);
        return n;
    }

    std::size_t variational_layer_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers)
            if (std::holds_alternative<DenseVariational>(l)) ++n;
        return n;
    }
};

/// Instantiates the spec with the module-default initializations:
/// deterministic weights Glorot-normal, variational blocks mu ~ N(0, 0.1^2)
/// with sigma = 0.05. Deterministic given (spec, seed).
inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Model model;
    model.spec = spec;
    model.seed = seed;
    RngStream master(seed);

    std::size_t in = spec.input_width;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        RngStream layer_rng = master.split(i);
        const std::size_t out = l.units;
        if (!l.is_variational()) {
            DenseDeterministic d;
            const double glorot = std::sqrt(2.0 / static_cast<double>(in + out));
            d.weights = layer_rng.normal_tensor({out, in}, 0.0, glorot);
            d.bias = Tensor::zeros({out});
            d.act = l.activation;
            model.layers.emplace_back(std::move(d));
        } else {
            if (l.family == PosteriorFamily::radial && (out * in < 2 || out < 2))
                throw std::invalid_argument(
                    "build_model: layer " + std::to_string(i) +
                    ": radial family with a 1-parameter block is degenerate");
            DenseVariational v;
            v.weight_posterior = init_diagonal_gaussian(out * in, layer_rng);
            v.bias_posterior = init_diagonal_gaussian(out, layer_rng);
            v.family = l.family;
            v.prior_sigma = l.prior_sigma;
            v.act = l.activation;
            v.in = in;
            v.out = out;
            model.layers.emplace_back(std::move(v));
        }
        in = out;
    }
    return model;
}

/// (L-P, P) for a canonical suffix-hybrid; non-suffix placements are flagged
/// rather than rejected so placement sweeps can still run them.
struct HybridSplit {
    std::size_t deterministic_depth = 0;
    std::size_t probabilistic_depth = 0;
    bool canonical = true;
};

inline HybridSplit hybrid_split(const ModelSpec& spec) {
    HybridSplit out;
    const std::size_t total = spec.layers.size();
    std::size_t suffix = 0;
    while (suffix < total && spec.layers[total - 1 - suffix].is_variational()) ++suffix;
    out.probabilistic_depth = suffix;
    out.deterministic_depth = total - suffix;
    for (std::size_t i = 0; i + suffix < total; ++i)
        if (spec.layers[i].is_variational()) {
            out.canonical = false;
            std::size_t p = 0;
            for (const LayerSpec& l : spec.layers) p += l.is_variational() ? 1 : 0;
            out.probabilistic_depth = p;
            out.deterministic_depth = total - p;
            break;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

struct ModelTapePass {
    Value output;             // final layer output, pre-head
    std::optional<Value> kl;  // sum of per-layer KL contributions
};

/// One sampled forward pass on the tape. Appends every parameter leaf it
/// creates to `binding`; with multiple Monte Carlo passes on one tape the
/// same parameter appears once per pass and the optimizer accumulates across
/// entries by storage pointer.
inline ModelTapePass model_forward_on_tape(Tape& tape, Model& model, Value x, NoiseSource& noise,
                                           TapeBinding& binding) {
    Value h = x;
    std::optional<Value> kl;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerForward lf = std::visit(
            [&](auto& layer) -> LayerForward {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, DenseDeterministic>)
                    return forward_on_tape(tape, layer, h, binding, i);
                else
                    return forward_on_tape(tape, layer, h, binding, i, noise);
            },
            model.layers[i]);
        h = lf.output;
        if (lf.kl) kl = kl ? std::optional<Value>(tape.add(*kl, *lf.kl)) : lf.kl;
    }
    return ModelTapePass{h, kl};
}

/// Value-level sampled forward: fresh weight draw per call, shared across the
/// batch. Used by prediction.
inline Tensor model_forward_sampled(const Model& model, const Tensor& x, NoiseSource& noise) {
    Tensor h = x;
    for (const Layer& l : model.layers) {
        h = std::visit(
            [&](const auto& layer) -> Tensor {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, DenseDeterministic>)
                    return dense_forward(layer, h);
                else
                    return forward_sampled(layer, h, noise);
            },
            l);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: spec + flat parameter arrays + seed provenance
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::vector<double>>> layer_params;  // per layer, per block
    std::optional<FeatureScaling> scaling;
    std::string target_name;
};

inline Checkpoint checkpoint_from_model(const Model& model) {
    Checkpoint ck;
    ck.spec = model.spec;
    ck.seed = model.seed;
    for (const Layer& l : model.layers) {
        std::vector<std::vector<double>> blocks;
        if (const auto* d = std::get_if<DenseDeterministic>(&l)) {
            blocks = {d->weights.data(), d->bias.data()};
        } else {
            const auto& v = std::get<DenseVariational>(l);
            blocks = {v.weight_posterior.mu.data(), v.weight_posterior.rho.data(),
                      v.bias_posterior.mu.data(), v.bias_posterior.rho.data()};
        }
        ck.layer_params.push_back(std::move(blocks));
    }
    return ck;
}

inline Model model_from_checkpoint(const Checkpoint& ck) {
    Model model = build_model(ck.spec, ck.seed);
    if (ck.layer_params.size() != model.layers.size())
        throw std::runtime_error("checkpoint: layer count mismatch");
    auto restore = [](Tensor& t, const std::vector<double>& flat, const char* what) {
        if (flat.size() != t.size())
            throw std::runtime_error(std::string("checkpoint: bad length for ") + what);
        t.data() = flat;
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& blocks = ck.layer_params[i];
        if (auto* d = std::get_if<DenseDeterministic>(&model.layers[i])) {
            if (blocks.size() != 2) throw std::runtime_error("checkpoint: expected 2 blocks");
            restore(d->weights, blocks[0], "weights");
            restore(d->bias, blocks[1], "bias");
        } else {
            auto& v = std::get<DenseVariational>(model.layers[i]);
            if (blocks.size() != 4) throw std::runtime_error("checkpoint: expected 4 blocks");
            restore(v.weight_posterior.mu, blocks[0], "weight.mu");
            restore(v.weight_posterior.rho, blocks[1], "weight.rho");
            restore(v.bias_posterior.mu, blocks[2], "bias.mu");
            restore(v.bias_posterior.rho, blocks[3], "bias.rho");
        }
    }
    return model;
}

inline nlohmann::json to_json(const Checkpoint& ck) {
    nlohmann::json j;
    j["format"] = "bnn-checkpoint";
    j["version"] = 1;
    j["seed"] = ck.seed;
    j["spec"] = to_json(ck.spec);
    j["layers"] = ck.layer_params;
    if (ck.scaling) {
        j["standardization"] = {{"mean", ck.scaling->mean}, {"stddev", ck.scaling->stddev}};
        j["target-column"] = ck.target_name;
    }
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "bnn-checkpoint")
        throw std::runtime_error("checkpoint: not a bnn-checkpoint file");
    if (j.value("version", 0) != 1)
        throw std::runtime_error("checkpoint: unsupported version");
    Checkpoint ck;
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.spec = parse_model_spec(j.at("spec"));
    ck.layer_params = j.at("layers").get<std::vector<std::vector<std::vector<double>>>>();
    if (j.contains("standardization")) {
        FeatureScaling sc;
        sc.mean = j["standardization"].at("mean").get<std::vector<double>>();
        sc.stddev = j["standardization"].at("stddev").get<std::vector<double>>();
        ck.scaling = std::move(sc);
        ck.target_name = j.value("target-column", "");
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out << to_json(ck).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace bnn
