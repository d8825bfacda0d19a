// Command-line front end: train, predict, diagnose-prior, sweep-position,
// gen-data. All heavy lifting lives in the headers; this file only parses
// flags and dispatches.

#include <iostream>

#include <CLI11.hpp>

#include "bnn/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"bnn: variational Bayesian MLPs with calibrated uncertainty"};
    app.require_subcommand(1);

    bnn::GenDataOptions gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "Generate a synthetic regression CSV");
    cmd_gen->add_option("--kind", gen.kind, "linear or sine")->check(CLI::IsMember({"linear", "sine"}));
    cmd_gen->add_option("--n", gen.n, "number of rows");
    cmd_gen->add_option("--noise", gen.noise, "observation noise stddev");
    cmd_gen->add_option("--seed", gen.seed, "rng seed");
    cmd_gen->add_option("--out", gen.out, "output CSV path");
    cmd_gen->add_option("--slope", gen.slope, "linear slope");
    cmd_gen->add_option("--intercept", gen.intercept, "linear intercept");
    cmd_gen->add_option("--amplitude", gen.amplitude, "sine amplitude");
    cmd_gen->add_option("--frequency", gen.frequency, "sine frequency");
    cmd_gen->add_option("--x-min", gen.x_min, "input range low");
    cmd_gen->add_option("--x-max", gen.x_max, "input range high");

    bnn::TrainCliOptions tr;
    CLI::App* cmd_tr = app.add_subcommand("train", "Train a model spec on a CSV dataset");
    cmd_tr->add_option("--spec", tr.spec_path, "model spec JSON")->required();
    cmd_tr->add_option("--data", tr.data_path, "training CSV")->required();
    cmd_tr->add_option("--target-column", tr.target_column, "target column name");
    cmd_tr->add_option("--task", tr.task, "regression or classification")
        ->check(CLI::IsMember({"regression", "classification"}));
    cmd_tr->add_option("--learning-rate", tr.learning_rate, "SGD step size");
    cmd_tr->add_option("--epochs", tr.epochs, "training epochs");
    cmd_tr->add_option("--batch-size", tr.batch_size, "minibatch size");
    cmd_tr->add_option("--seed", tr.seed, "rng seed");
    cmd_tr->add_option("--kl-weight", tr.kl_weight,
                       "KL term weight (negative = 1/train-set-size)");
    cmd_tr->add_option("--mc-samples", tr.mc_samples, "Monte Carlo samples per step");
    cmd_tr->add_option("--posterior-family", tr.posterior_family,
                       "override posterior family for all variational layers")
        ->check(CLI::IsMember({"mean-field", "radial"}));
    cmd_tr->add_option("--optimizer", tr.optimizer, "sgd or sgd-momentum")
        ->check(CLI::IsMember({"sgd", "sgd-momentum"}));
    cmd_tr->add_option("--momentum", tr.momentum, "momentum coefficient");
    cmd_tr->add_option("--clip-norm", tr.clip_norm, "global gradient norm clip (0 = off)");
    cmd_tr->add_option("--split-fraction", tr.split_fraction, "train fraction of the data");
    cmd_tr->add_option("--out-checkpoint", tr.out_checkpoint, "checkpoint path");
    cmd_tr->add_option("--out-trace", tr.out_trace, "per-epoch trace path");

    bnn::PredictCliOptions pr;
    CLI::App* cmd_pr = app.add_subcommand("predict", "Posterior-predictive report for a CSV");
    cmd_pr->add_option("--checkpoint", pr.checkpoint_path, "trained checkpoint")->required();
    cmd_pr->add_option("--data", pr.data_path, "CSV with actual targets")->required();
    cmd_pr->add_option("--samples", pr.n_samples, "posterior samples per prediction");
    cmd_pr->add_option("--seed", pr.seed, "rng seed");
    cmd_pr->add_option("--interval", pr.interval, "95% interval kind: gaussian or empirical")
        ->check(CLI::IsMember({"gaussian", "empirical"}));
    cmd_pr->add_option("--report-out", pr.report_out, "also write the report to this file");

    bnn::DiagnosePriorOptions dg;
    CLI::App* cmd_dg = app.add_subcommand("diagnose-prior",
                                          "Per-layer kurtosis of prior-propagated units");
    cmd_dg->add_option("--spec", dg.spec_path, "model spec JSON")->required();
    cmd_dg->add_option("--samples", dg.samples, "prior samples");
    cmd_dg->add_option("--depth", dg.depth, "layers to probe (0 = all)");
    cmd_dg->add_option("--seed", dg.seed, "rng seed");

    bnn::SweepOptions sw;
    CLI::App* cmd_sw = app.add_subcommand("sweep-position",
                                          "Compare variational layer placements");
    cmd_sw->add_option("--spec", sw.spec_path, "base model spec JSON")->required();
    cmd_sw->add_option("--data", sw.data_path, "training CSV")->required();
    cmd_sw->add_option("--target-column", sw.target_column, "target column name");
    cmd_sw->add_option("--learning-rate", sw.learning_rate, "SGD step size");
    cmd_sw->add_option("--epochs", sw.epochs, "training epochs per run");
    cmd_sw->add_option("--batch-size", sw.batch_size, "minibatch size");
    cmd_sw->add_option("--seed", sw.seed, "rng seed shared by every run");
    cmd_sw->add_option("--kl-weight", sw.kl_weight,
                       "KL term weight (negative = 1/train-set-size)");
    cmd_sw->add_option("--mc-samples", sw.mc_samples, "Monte Carlo samples per step");
    cmd_sw->add_option("--posterior-family", sw.posterior_family, "family for the swept layer")
        ->check(CLI::IsMember({"mean-field", "radial"}));
    cmd_sw->add_option("--optimizer", sw.optimizer, "sgd or sgd-momentum")
        ->check(CLI::IsMember({"sgd", "sgd-momentum"}));
    cmd_sw->add_option("--momentum", sw.momentum, "momentum coefficient");
    cmd_sw->add_option("--split-fraction", sw.split_fraction, "train fraction of the data");
    cmd_sw->add_option("--predict-samples", sw.predict_samples, "posterior samples for metrics");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) bnn::cmd_gen_data(gen, std::cout);
        if (cmd_tr->parsed()) bnn::cmd_train(tr, std::cout);
        if (cmd_pr->parsed()) bnn::cmd_predict(pr, std::cout);
        if (cmd_dg->parsed()) bnn::cmd_diagnose_prior(dg, std::cout);
        if (cmd_sw->parsed()) bnn::cmd_sweep_position(sw, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
