#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "bnn/dataset.hpp"
#include "bnn/diagnostics.hpp"
#include "bnn/model.hpp"
#include "bnn/predictive.hpp"
#include "bnn/trainer.hpp"

namespace bnn {

namespace detail {

inline std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataOptions {
    std::string kind = "linear";  // linear | sine
    std::size_t n = 512;
    double noise = 0.1;
    std::uint64_t seed = 42;
    std::string out = "data.csv";
    double slope = 2.0;
    double intercept = 1.0;
    double amplitude = 1.0;
    double frequency = 1.0;
    double x_min = -1.0;
    double x_max = 1.0;
};

inline void cmd_gen_data(const GenDataOptions& opt, std::ostream& log) {
    RngStream rng(opt.seed);
    SyntheticXY xy;
    if (opt.kind == "linear") {
        xy = gen_linear(opt.n, opt.slope, opt.intercept, opt.noise, opt.x_min, opt.x_max, rng);
    } else if (opt.kind == "sine") {
        xy = gen_sine(opt.n, opt.amplitude, opt.frequency, opt.noise, opt.x_min, opt.x_max, rng);
    } else {
        throw std::invalid_argument("gen-data: unknown kind '" + opt.kind + "'");
    }
    write_csv(opt.out, xy);
    log << "gen-data: wrote " << opt.n << " " << opt.kind << " rows to " << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCliOptions {
    std::string spec_path;
    std::string data_path;
    std::string target_column = "y";
    std::string task = "regression";
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    double kl_weight = -1.0;  // negative = default 1/train-set-size
    std::size_t mc_samples = 1;
    std::string posterior_family;  // empty = as written in the spec
    std::string optimizer = "sgd";
    double momentum = 0.9;
    double clip_norm = 0.0;
    double split_fraction = 0.8;
    std::string out_checkpoint = "model.ckpt.json";
    std::string out_trace = "trace.txt";
};

inline void write_trace_file(const std::string& path, const TrainTrace& trace,
                             const TrainCliOptions& opt, double kl_weight) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("train: cannot open trace file '" + path + "'");
    out << "# bnn-trace seed=" << opt.seed << " epochs=" << opt.epochs
        << " batch-size=" << opt.batch_size << " learning-rate=" << detail::g17(opt.learning_rate)
        << " kl-weight=" << detail::g17(kl_weight) << " mc-samples=" << opt.mc_samples
        << " optimizer=" << opt.optimizer << "\n";
    for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
        const EpochRecord& r = trace.epochs[e];
        out << "epoch=" << (e + 1) << " total=" << detail::g17(r.total)
            << " nll=" << detail::g17(r.nll) << " kl=" << detail::g17(r.kl) << "\n";
    }
}

inline TrainConfig train_config_from(const TrainCliOptions& opt, std::size_t train_size) {
    TrainConfig cfg;
    cfg.learning_rate = opt.learning_rate;
    cfg.epochs = opt.epochs;
    cfg.batch_size = opt.batch_size;
    cfg.seed = opt.seed;
    cfg.optimizer = optimizer_from_string(opt.optimizer);
    cfg.momentum = opt.momentum;
    cfg.clip_norm = opt.clip_norm;
    cfg.elbo.kl_weight = opt.kl_weight < 0.0
                             ? 1.0 / static_cast<double>(train_size)
                             : opt.kl_weight;
    cfg.elbo.n_mc_samples = opt.mc_samples;
    return cfg;
}

inline ModelSpec load_spec_with_overrides(const std::string& spec_path,
                                          const std::string& family_override) {
    ModelSpec spec = load_model_spec(spec_path);
    if (!family_override.empty()) {
        const PosteriorFamily fam = posterior_family_from_string(family_override);
        for (LayerSpec& l : spec.layers)
            if (l.is_variational()) l.family = fam;
    }
    return spec;
}

inline void cmd_train(const TrainCliOptions& opt, std::ostream& log) {
    const ModelSpec spec = load_spec_with_overrides(opt.spec_path, opt.posterior_family);
    const TaskKind task = task_from_string(opt.task);
    const Dataset full = ingest_csv(opt.data_path, opt.target_column, task);
    auto [train_set, test_set] = split_dataset(full, opt.split_fraction, opt.seed);
    if (train_set.size() == 0) throw std::runtime_error("train: empty training split");

    Model model = build_model(spec, opt.seed);
    const TrainConfig cfg = train_config_from(opt, train_set.size());
    const TrainTrace trace = train(model, train_set, cfg);
    write_trace_file(opt.out_trace, trace, opt, cfg.elbo.kl_weight);
    if (trace.diverged)
        throw std::runtime_error("train: diverged (" + trace.divergence_reason +
                                 "); partial trace written to " + opt.out_trace);

    Checkpoint ck = checkpoint_from_model(model);
    ck.scaling = full.scaling;
    ck.target_name = opt.target_column;
    save_checkpoint(opt.out_checkpoint, ck);

    log << "train: " << trace.epochs.size() << " epochs on " << train_set.size() << " rows ("
        << test_set.size() << " held out)\n";
    if (!trace.epochs.empty()) {
        const EpochRecord& last = trace.epochs.back();
        log << "train: final total=" << detail::g6(last.total) << " nll=" << detail::g6(last.nll)
            << " kl=" << detail::g6(last.kl) << "\n";
    }
    log << "train: checkpoint " << opt.out_checkpoint << ", trace " << opt.out_trace << "\n";
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictCliOptions {
    std::string checkpoint_path;
    std::string data_path;
    std::size_t n_samples = 200;
    std::uint64_t seed = 7;
    std::string interval = "gaussian";  // or "empirical" (quantile intervals)
    std::string report_out;  // optional file; report always goes to the stream
};

inline void cmd_predict(const PredictCliOptions& opt, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint_path);
    Model model = model_from_checkpoint(ck);
    const TaskKind task = model.spec.head.kind == HeadKind::categorical
                              ? TaskKind::classification
                              : TaskKind::regression;
    const std::string target = ck.target_name.empty() ? "y" : ck.target_name;
    const FeatureScaling* scaling = ck.scaling ? &*ck.scaling : nullptr;
    const Dataset ds = ingest_csv_scaled(opt.data_path, target, task, scaling);
    if (ds.width() != model.input_width())
        throw std::runtime_error("predict: data width " + std::to_string(ds.width()) +
                                 " does not match checkpoint input width " +
                                 std::to_string(model.input_width()));

    RngStream rng(opt.seed);
    if (task == TaskKind::regression) {
        const auto summaries = posterior_predictive_batch(model, ds.features, opt.n_samples, rng,
                                                          interval_from_string(opt.interval));
        const std::vector<double> actuals(ds.targets.data().begin(), ds.targets.data().end());
        const std::string report = format_prediction_report(summaries, actuals);
        const CalibrationMetrics m = calibration_metrics(summaries, actuals);
        out << report;
        out << "rmse=" << detail::g17(m.rmse) << " nll=" << detail::g17(m.nll)
            << " coverage95=" << detail::g17(m.coverage95) << "\n";
        if (!opt.report_out.empty()) {
            std::ofstream f(opt.report_out);
            if (!f) throw std::runtime_error("predict: cannot open '" + opt.report_out + "'");
            f << report;
        }
    } else {
        const auto summaries = class_predictive_batch(model, ds.features, opt.n_samples, rng);
        std::size_t correct = 0;
        double nll = 0.0;
        std::string report;
        for (std::size_t i = 0; i < summaries.size(); ++i) {
            const auto& s = summaries[i];
            report += "Prediction class: " + std::to_string(s.predicted) +
                      ", entropy: " + format_rounded(s.entropy) +
                      " - Actual: " + std::to_string(ds.labels[i]) + "\n";
            if (s.predicted == ds.labels[i]) ++correct;
            const double p = std::max(s.probabilities[ds.labels[i]], kProbFloor);
            nll -= std::log(p);
        }
        out << report;
        out << "accuracy=" << detail::g17(static_cast<double>(correct) / summaries.size())
            << " nll=" << detail::g17(nll / summaries.size()) << "\n";
        if (!opt.report_out.empty()) {
            std::ofstream f(opt.report_out);
            if (!f) throw std::runtime_error("predict: cannot open '" + opt.report_out + "'");
            f << report;
        }
    }
}

// ---------------------------------------------------------------------------
// diagnose-prior
// ---------------------------------------------------------------------------

struct DiagnosePriorOptions {
    std::string spec_path;
    std::size_t samples = 100000;
    std::size_t depth = 0;  // 0 = all layers
    std::uint64_t seed = 11;
};

inline void cmd_diagnose_prior(const DiagnosePriorOptions& opt, std::ostream& out) {
    const ModelSpec spec = load_model_spec(opt.spec_path);
    if (spec.layers.size() < 3)
        throw std::invalid_argument("diagnose-prior: spec needs at least 2 hidden layers");
    const std::size_t depth = opt.depth == 0 ? spec.layers.size() : opt.depth;
    RngStream rng(opt.seed);
    const PriorUnitStats stats = prior_unit_diagnostic(spec, depth, opt.samples, rng);
    out << "# bnn-prior-diagnostic seed=" << opt.seed << " samples=" << opt.samples
        << " input-width=" << spec.input_width << "\n";
    for (std::size_t l = 0; l < stats.excess_kurtosis.size(); ++l)
        out << "layer=" << (l + 1) << " width=" << stats.width[l]
            << " excess-kurtosis=" << detail::g6(stats.excess_kurtosis[l]) << "\n";
}

// ---------------------------------------------------------------------------
// sweep-position
// ---------------------------------------------------------------------------

struct SweepOptions {
    std::string spec_path;
    std::string data_path;
    std::string target_column = "y";
    double learning_rate = 0.05;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    double kl_weight = -1.0;
    std::size_t mc_samples = 1;
    std::string posterior_family = "mean-field";
    std::string optimizer = "sgd";
    double momentum = 0.9;
    double split_fraction = 0.8;
    std::size_t predict_samples = 200;
};

namespace detail {

inline ModelSpec single_placement_variant(const ModelSpec& base, std::size_t pos,
                                          PosteriorFamily fam) {
    ModelSpec v = base;
    for (LayerSpec& l : v.layers) {
        l.kind = LayerSpec::Kind::dense;
        l.family = PosteriorFamily::mean_field;
        l.prior_sigma = 1.0;
    }
    v.layers[pos].kind = LayerSpec::Kind::dense_variational;
    v.layers[pos].family = fam;
    return v;
}

inline ModelSpec reference_case_spec(const ModelSpec& base, bool variational_hidden) {
    std::size_t h1 = 8;
    if (base.layers.size() >= 2) h1 = base.layers[0].units;
    const std::size_t h2 = base.layers.size() >= 3 ? base.layers[1].units : h1;
    ModelSpec spec;
    spec.input_width = base.input_width;
    spec.head.kind = HeadKind::gaussian;
    LayerSpec hidden1, hidden2, output;
    hidden1.units = h1;
    hidden1.activation = Activation::sigmoid;
    hidden2.units = h2;
    hidden2.activation = Activation::sigmoid;
    output.units = 2;
    output.activation = Activation::identity;
    if (variational_hidden) {  // probabilistic hidden layers, deterministic output
        hidden1.kind = hidden2.kind = LayerSpec::Kind::dense_variational;
        output.kind = LayerSpec::Kind::dense;
    } else {  // deterministic hidden layers, probabilistic output
        hidden1.kind = hidden2.kind = LayerSpec::Kind::dense;
        output.kind = LayerSpec::Kind::dense_variational;
    }
    spec.layers = {hidden1, hidden2, output};
    return spec;
}

}  // namespace detail

/// Trains one model per placement of a single variational layer (plus the
/// two fixed reference cases: variational-hidden and variational-output),
/// all from the same seed, and emits one metrics row per run.
inline void cmd_sweep_position(const SweepOptions& opt, std::ostream& out) {
    const ModelSpec base = load_model_spec(opt.spec_path);
    if (base.head.kind != HeadKind::gaussian)
        throw std::invalid_argument("sweep-position: regression sweep needs a gaussian head");
    const PosteriorFamily fam = posterior_family_from_string(opt.posterior_family);
    const Dataset full = ingest_csv(opt.data_path, opt.target_column, TaskKind::regression);
    auto [train_set, test_set] = split_dataset(full, opt.split_fraction, opt.seed);
    if (train_set.size() == 0 || test_set.size() == 0)
        throw std::runtime_error("sweep-position: split produced an empty set");

    const std::size_t n_layers = base.layers.size();
    out << "# bnn-sweep seed=" << opt.seed << " epochs=" << opt.epochs
        << " placements=" << n_layers << " family=" << opt.posterior_family << "\n";

    TrainCliOptions topt;
    topt.learning_rate = opt.learning_rate;
    topt.epochs = opt.epochs;
    topt.batch_size = opt.batch_size;
    topt.seed = opt.seed;
    topt.kl_weight = opt.kl_weight;
    topt.mc_samples = opt.mc_samples;
    topt.optimizer = opt.optimizer;
    topt.momentum = opt.momentum;

    auto run_one = [&](const std::string& label, const ModelSpec& spec) {
        try {
            Model model = build_model(spec, opt.seed);
            const TrainConfig cfg = train_config_from(topt, train_set.size());
            const TrainTrace trace = train(model, train_set, cfg);
            if (trace.diverged)
                throw std::runtime_error("diverged: " + trace.divergence_reason);
            RngStream rng(opt.seed);
            const auto summaries =
                posterior_predictive_batch(model, test_set.features, opt.predict_samples, rng);
            const std::vector<double> actuals(test_set.targets.data().begin(),
                                              test_set.targets.data().end());
            const CalibrationMetrics m = calibration_metrics(summaries, actuals);
            out << "position=" << label << " rmse=" << detail::g17(m.rmse)
                << " nll=" << detail::g17(m.nll)
                << " coverage95=" << detail::g17(m.coverage95) << "\n";
        } catch (const std::exception& e) {
            out << "position=" << label << " status=failed error=\"" << e.what() << "\"\n";
        }
    };

    for (std::size_t p = 0; p < n_layers; ++p)
        run_one(std::to_string(p + 1), detail::single_placement_variant(base, p, fam));
    run_one("case1", detail::reference_case_spec(base, true));
    run_one("case2", detail::reference_case_spec(base, false));
}

}  // namespace bnn
