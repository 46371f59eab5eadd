#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "memdiff/experiment.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> steps;
    std::optional<double> stop_t;
    bool record = false;
    std::optional<std::string> checkpoint;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config_path, "Configuration file (key = value)");
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
}

memdiff::ExperimentConfig resolve(const Overrides& o) {
    memdiff::ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = memdiff::load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.steps) cfg.steps = *o.steps;
    if (o.stop_t) cfg.stop_t = *o.stop_t;
    if (o.record) cfg.record = true;
    if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
    memdiff::validate_config(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion training from noisy data and memorization diagnostics"};
    app.require_subcommand(1);
    Overrides o;

    auto* train = app.add_subcommand("train", "Train a denoiser and write model.ckpt and loss.csv");
    auto* sample = app.add_subcommand("sample", "Sample a checkpoint with the reverse ODE");
    auto* eval = app.add_subcommand("eval", "Memorization and quality metrics for generated samples");
    auto* sweep = app.add_subcommand("sweep", "Train one model per sweep.sigma_tn value and write pareto.csv");
    auto* mi = app.add_subcommand("mi", "Gaussian mutual information table");
    auto* subpop = app.add_subcommand("subpop", "Subpopulation coefficients and error decomposition check");
    auto* gmm = app.add_subcommand("gmm", "Total variation between noised mixture components");
    for (auto* s : {train, sample, eval, sweep, mi, subpop, gmm}) add_common(s, o);
    sample->add_option("--steps", o.steps, "Integration steps");
    sample->add_option("--stop-t", o.stop_t, "Final time (0 selects t_min)");
    sample->add_flag("--record", o.record, "Also write trajectory.csv");
    sample->add_option("--checkpoint", o.checkpoint, "Checkpoint to sample (default <out>/model.ckpt)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const auto cfg = resolve(o);
        if (train->parsed()) {
            memdiff::cmd_train(cfg);
        } else if (sample->parsed()) {
            memdiff::cmd_sample(cfg);
        } else if (eval->parsed()) {
            memdiff::cmd_eval(cfg);
        } else if (sweep->parsed()) {
            memdiff::cmd_sweep(cfg);
        } else if (mi->parsed()) {
            memdiff::cmd_mi(cfg);
        } else if (subpop->parsed()) {
            memdiff::cmd_subpop(cfg);
        } else if (gmm->parsed()) {
            memdiff::cmd_gmm(cfg);
        }
    } catch (const memdiff::ConfigError& e) {
        std::cerr << "memdiff: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "memdiff: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
