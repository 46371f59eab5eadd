#pragma once

// Experiment drivers behind the command-line subcommands. Each writes its
// artifacts under cfg.out_dir and echoes the resolved configuration there.
// All randomness is derived from cfg.seed by component name.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "memdiff/checkpoint.hpp"
#include "memdiff/config.hpp"
#include "memdiff/csv.hpp"
#include "memdiff/datasets.hpp"
#include "memdiff/gmmnoise.hpp"
#include "memdiff/infotheory.hpp"
#include "memdiff/metrics.hpp"
#include "memdiff/sampler.hpp"
#include "memdiff/subpop.hpp"
#include "memdiff/trainer.hpp"

namespace memdiff {

namespace fs = std::filesystem;

inline NoiseSchedule make_schedule(const ExperimentConfig& cfg) {
    if (cfg.schedule_kind == "tabulated") return NoiseSchedule::tabulated(cfg.knot_times, cfg.knot_sigmas, cfg.t_min);
    return NoiseSchedule::linear(cfg.sigma_max, cfg.t_min);
}

inline RingMixture make_mixture(const ExperimentConfig& cfg) {
    return {cfg.mixture_components, cfg.mixture_radius, cfg.mixture_stddev};
}

inline SampleSet load_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_kind == "file") return SampleSet(read_points_csv(cfg.dataset_path));
    return SampleSet(make_mixture(cfg).sample(static_cast<Eigen::Index>(cfg.dataset_n), derive_seed("dataset", cfg.seed)));
}

/// Held-out samples of the true distribution, used as the quality reference.
inline SampleSet load_reference(const ExperimentConfig& cfg, Eigen::Index n) {
    if (cfg.dataset_kind == "file") {
        if (cfg.dataset_reference_path.empty()) {
            throw ConfigError("dataset.reference_path is required for file datasets");
        }
        return SampleSet(read_points_csv(cfg.dataset_reference_path));
    }
    return SampleSet(make_mixture(cfg).sample(n, derive_seed("reference", cfg.seed)));
}

inline LossMode parse_loss_mode(const std::string& s) {
    if (s == "ddpm") return LossMode::ddpm;
    if (s == "ambient") return LossMode::ambient;
    return LossMode::hybrid;
}

inline TrainConfig make_train_config(const ExperimentConfig& cfg, const NoiseSchedule& sched, double sigma_tn,
                                     LossMode mode) {
    TrainConfig tc;
    tc.t_n = sched.time_at_sigma(sigma_tn);
    tc.batch = cfg.batch;
    tc.iterations = cfg.iterations;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = derive_seed("train", cfg.seed);
    tc.mode = mode;
    tc.arch.fourier_frequencies = static_cast<std::uint32_t>(cfg.fourier_frequencies);
    tc.arch.hidden_width = static_cast<std::uint32_t>(cfg.hidden_width);
    tc.arch.hidden_layers = static_cast<std::uint32_t>(cfg.hidden_layers);
    return tc;
}

inline void prepare_output(const ExperimentConfig& cfg, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir, "cannot create output directory: " + ec.message());
    const std::string path = dir + "/config.resolved";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << render_config(cfg);
    if (!out) throw IoError(path, "write failed");
}

inline void write_loss_csv(const std::string& path, const TrainResult& tr, std::uint64_t seed) {
    CsvWriter w(path, "loss", seed, {"iteration", "loss", "ddpm_loss", "ambient_loss", "ddpm_terms", "ambient_terms"});
    for (std::size_t i = 0; i < tr.history.size(); ++i) {
        const auto& h = tr.history[i];
        w.cell(static_cast<std::uint64_t>(i)).cell(h.loss).cell(h.ddpm_loss).cell(h.ambient_loss);
        w.cell(static_cast<std::uint64_t>(h.counts.ddpm_terms)).cell(static_cast<std::uint64_t>(h.counts.ambient_terms));
        w.end_row();
    }
    w.close();
}

/// Trains at cfg.sigma_tn and writes model.ckpt and loss.csv.
inline TrainResult cmd_train(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    const auto sched = make_schedule(cfg);
    const auto data = load_dataset(cfg);
    const auto tc = make_train_config(cfg, sched, cfg.sigma_tn, parse_loss_mode(cfg.loss_mode));
    auto tr = train(data, tc, sched);
    write_checkpoint(cfg.out_dir + "/model.ckpt", *tr.net, tr.normalizer);
    write_loss_csv(cfg.out_dir + "/loss.csv", tr, cfg.seed);
    return tr;
}

/// Reverse-ODE samples of a trained network, mapped back to data coordinates.
inline Points generate(const DenoiserNet& net, const Normalizer& norm, const NoiseSchedule& sched, std::size_t n,
                       std::size_t steps, double stop_t, std::uint64_t seed, TrajectoryRecord* record = nullptr) {
    const auto field = ScoreField::learned(std::make_shared<const DenoiserNet>(net), sched);
    auto rec = reverse_ode_sample(field, static_cast<Eigen::Index>(n), steps, stop_t > 0.0 ? stop_t : sched.t_min(),
                                  seed, record != nullptr);
    Points out = norm.invert(rec.final);
    if (record) {
        for (auto& s : rec.states) s = norm.invert(s);
        rec.final = out;
        *record = std::move(rec);
    }
    return out;
}

/// Samples from a checkpoint (cfg.checkpoint, default out_dir/model.ckpt).
inline Points cmd_sample(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    const auto sched = make_schedule(cfg);
    const std::string ckpt = cfg.checkpoint.empty() ? cfg.out_dir + "/model.ckpt" : cfg.checkpoint;
    const auto model = read_checkpoint(ckpt);
    TrajectoryRecord rec;
    const Points x = generate(model.net, model.normalizer, sched, cfg.sample_n, cfg.steps, cfg.stop_t,
                              derive_seed("sample", cfg.seed), cfg.record ? &rec : nullptr);
    write_points_csv(cfg.out_dir + "/samples.csv", x, "samples", cfg.seed);
    if (cfg.record) {
        std::vector<std::string> cols{"step", "time", "trajectory"};
        for (Eigen::Index j = 0; j < x.cols(); ++j) cols.push_back("x" + std::to_string(j));
        CsvWriter w(cfg.out_dir + "/trajectory.csv", "trajectory", cfg.seed, cols);
        for (std::size_t s = 0; s < rec.states.size(); ++s) {
            const auto step = rec.snapshot_steps[s];
            for (Eigen::Index i = 0; i < rec.states[s].rows(); ++i) {
                w.cell(static_cast<std::uint64_t>(step)).cell(rec.times[step]).cell(static_cast<std::uint64_t>(i));
                for (Eigen::Index j = 0; j < x.cols(); ++j) w.cell(rec.states[s](i, j));
                w.end_row();
            }
        }
        w.close();
    }
    return x;
}

struct EvalResult {
    MemorizationReport report;
    double delta = 0.0;
    double memorization = 0.0;  ///< fraction within delta of a training point
    FrechetResult frechet;
    double w2 = std::numeric_limits<double>::quiet_NaN();
};

inline EvalResult evaluate(const SampleSet& gen, const SampleSet& train_set, const SampleSet* reference,
                           const ExperimentConfig& cfg) {
    EvalResult r;
    r.delta = cfg.delta_factor * train_set.data_scale();
    r.report = nn_similarity(gen, train_set, cfg.similarity_thresholds, {r.delta});
    r.memorization = r.report.fraction_distance_below.front();
    const SampleSet& ref = reference ? *reference : train_set;
    if (gen.size() > gen.dim() && ref.size() > ref.dim()) r.frechet = gaussian_frechet(gen, ref);
    if (reference && gen.size() == reference->size() && gen.size() <= 4096) r.w2 = exact_w2(gen, *reference);
    return r;
}

inline void write_metrics_csv(const std::string& path, const EvalResult& r, std::uint64_t seed) {
    CsvWriter w(path, "metrics", seed, {"metric", "threshold", "value"});
    const auto& rep = r.report;
    for (std::size_t i = 0; i < rep.similarity_thresholds.size(); ++i) {
        w.cell("nn_similarity_fraction").cell(rep.similarity_thresholds[i]).cell(rep.fraction_similarity_at_least[i]).end_row();
    }
    w.cell("memorization_fraction").cell(r.delta).cell(r.memorization).end_row();
    w.cell("mean_similarity").cell("").cell(rep.mean_similarity).end_row();
    w.cell("similarity_p95").cell("").cell(rep.similarity_p95).end_row();
    w.cell("gaussian_frechet").cell("").cell(r.frechet.value).end_row();
    w.cell("frechet_regularized").cell("").cell(r.frechet.regularized).end_row();
    if (!std::isnan(r.w2)) w.cell("exact_w2").cell("").cell(r.w2).end_row();
    w.close();
}

/// Compares eval.generated (default out_dir/samples.csv) with eval.train
/// (default: the configured dataset).
inline EvalResult cmd_eval(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    const SampleSet gen(read_points_csv(cfg.eval_generated.empty() ? cfg.out_dir + "/samples.csv" : cfg.eval_generated));
    const SampleSet train_set = cfg.eval_train.empty() ? load_dataset(cfg) : SampleSet(read_points_csv(cfg.eval_train));
    std::unique_ptr<SampleSet> ref;
    if (cfg.dataset_kind == "mixture8" || !cfg.dataset_reference_path.empty()) {
        ref = std::make_unique<SampleSet>(load_reference(cfg, gen.size()));
    }
    auto r = evaluate(gen, train_set, ref.get(), cfg);
    write_metrics_csv(cfg.out_dir + "/metrics.csv", r, cfg.seed);
    return r;
}

struct SweepRow {
    double sigma_tn = 0.0;
    double t_n = 0.0;
    std::string mode;
    std::string status = "ok";
    double quality = std::numeric_limits<double>::quiet_NaN();       ///< exact W2 to the reference
    double memorization = std::numeric_limits<double>::quiet_NaN();  ///< fraction within delta
    double frechet = std::numeric_limits<double>::quiet_NaN();
    bool on_frontier = false;
};

inline std::string leg_directory(const ExperimentConfig& cfg, std::size_t i) {
    return cfg.out_dir + "/leg" + std::to_string(i);
}

/// One model per sweep.sigma_tn entry (0 is the DDPM baseline); writes one
/// leg directory per entry and pareto.csv.
inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg) {
    const auto& sigmas = cfg.sweep_sigma_tn;
    if (sigmas.size() < 2) throw ConfigError("sweep.sigma_tn needs at least two values");
    if (std::find(sigmas.begin(), sigmas.end(), 0.0) == sigmas.end()) {
        throw ConfigError("sweep.sigma_tn must include 0 (the DDPM baseline)");
    }
    prepare_output(cfg, cfg.out_dir);
    const auto sched = make_schedule(cfg);
    const auto data = load_dataset(cfg);
    const auto ref = load_reference(cfg, static_cast<Eigen::Index>(cfg.reference_n));

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        SweepRow row;
        row.sigma_tn = sigmas[i];
        const LossMode mode = sigmas[i] == 0.0 ? LossMode::ddpm : LossMode::hybrid;
        row.mode = to_string(mode);
        const std::string dir = leg_directory(cfg, i);
        try {
            auto leg_cfg = cfg;
            leg_cfg.out_dir = dir;
            leg_cfg.sigma_tn = sigmas[i];
            leg_cfg.loss_mode = row.mode;
            prepare_output(leg_cfg, dir);
            const auto tc = make_train_config(cfg, sched, sigmas[i], mode);
            row.t_n = tc.t_n;
            const auto tr = train(data, tc, sched);
            write_checkpoint(dir + "/model.ckpt", *tr.net, tr.normalizer);
            write_loss_csv(dir + "/loss.csv", tr, cfg.seed);
            const Points x = generate(*tr.net, tr.normalizer, sched, cfg.reference_n, cfg.steps, cfg.stop_t,
                                      derive_seed("sample", cfg.seed));
            write_points_csv(dir + "/samples.csv", x, "samples", cfg.seed);
            const auto ev = evaluate(SampleSet(x), data, &ref, cfg);
            write_metrics_csv(dir + "/metrics.csv", ev, cfg.seed);
            row.quality = ev.w2;
            row.memorization = ev.memorization;
            row.frechet = ev.frechet.value;
        } catch (const TrainingDiverged&) {
            row.status = "training_diverged";
        } catch (const IntegrationDiverged&) {
            row.status = "integration_diverged";
        }
        rows.push_back(row);
    }

    std::vector<ParetoEntry> entries;
    std::vector<std::size_t> which;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].status == "ok") {
            entries.push_back({rows[i].sigma_tn, rows[i].quality, rows[i].memorization, false});
            which.push_back(i);
        }
    }
    if (entries.size() >= 2) {
        // pareto_sweep orders by sigma_tn; match back by value and position.
        auto marked = pareto_sweep(entries);
        std::vector<bool> used(which.size(), false);
        for (const auto& m : marked) {
            for (std::size_t j = 0; j < which.size(); ++j) {
                if (!used[j] && entries[j].sigma_tn == m.sigma_tn && entries[j].quality == m.quality &&
                    entries[j].memorization == m.memorization) {
                    used[j] = true;
                    rows[which[j]].on_frontier = m.on_frontier;
                    break;
                }
            }
        }
    } else if (entries.size() == 1) {
        rows[which.front()].on_frontier = true;
    }

    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rows[a].sigma_tn < rows[b].sigma_tn; });
    CsvWriter w(cfg.out_dir + "/pareto.csv", "pareto", cfg.seed,
                {"sigma_tn", "t_n", "mode", "quality_w2", "memorization", "frechet", "on_frontier", "status", "leg"});
    for (std::size_t i : order) {
        const auto& r = rows[i];
        w.cell(r.sigma_tn).cell(r.t_n).cell(r.mode).cell(r.quality).cell(r.memorization).cell(r.frechet);
        w.cell(r.on_frontier).cell(r.status).cell(static_cast<std::uint64_t>(i)).end_row();
    }
    w.close();
    return rows;
}

struct MiRow {
    double sigma_tn;
    double mi_ambient;
    double mi_ddpm;
    double bound;
    double monte_carlo;  ///< NaN unless d = 1 and mi.draws > 0
};

inline std::vector<MiRow> cmd_mi(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    const Eigen::MatrixXd sigma =
        cfg.mi_prior_variance * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cfg.mi_dim), static_cast<Eigen::Index>(cfg.mi_dim));
    std::vector<MiRow> rows;
    CsvWriter w(cfg.out_dir + "/mi.csv", "mi", cfg.seed, {"sigma_tn", "mi_ambient", "mi_ddpm", "bound", "mi_monte_carlo"});
    for (std::size_t i = 0; i < cfg.mi_sigma_grid.size(); ++i) {
        const double s = cfg.mi_sigma_grid[i];
        const auto mi = mi_single_point(sigma, s, cfg.mi_m);
        double mc = std::numeric_limits<double>::quiet_NaN();
        if (cfg.mi_dim == 1 && cfg.mi_draws > 0 && cfg.mi_prior_variance > 0.0) {
            mc = mi_monte_carlo_gaussian(s, cfg.mi_draws, RandomStream(derive_seed("mi", cfg.seed), i).next_u64(),
                                         cfg.mi_prior_variance).estimate;
        }
        rows.push_back({s, mi.mi_ambient, mi.mi_ddpm, mi_dataset_bound(cfg.mi_dim, s, cfg.mi_m), mc});
        const auto& r = rows.back();
        w.cell(r.sigma_tn).cell(r.mi_ambient).cell(r.mi_ddpm).cell(r.bound).cell(r.monte_carlo).end_row();
    }
    w.close();
    return rows;
}

struct SubpopResult {
    std::vector<TauReport> tau;  ///< index l - 1
    std::vector<DecompositionCheck> checks;
};

inline SubpopResult cmd_subpop(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    FrequencyPrior prior = cfg.subpop_zipf_k > 0 ? zipf_prior(cfg.subpop_zipf_k, cfg.subpop_N)
                                                 : FrequencyPrior{cfg.subpop_pi, cfg.subpop_N};
    MarginalOptions opt;
    opt.seed = derive_seed("subpop-marginal", cfg.seed);
    const auto marg = frequency_marginal(prior, opt);
    std::unique_ptr<FrequencyMarginal> quad;
    if (marg.method() == MarginalMethod::monte_carlo) quad = std::make_unique<FrequencyMarginal>(quadrature_marginal(prior));

    SubpopResult res;
    const std::size_t n = cfg.subpop_n;
    CsvWriter wt(cfg.out_dir + "/tau.csv", "tau", cfg.seed, {"ell", "tau", "method", "tau_quadrature"});
    for (std::size_t l = 1; l <= n; ++l) {
        TauReport r;
        r.value = tau(l, n, marg);
        r.method = marg.method();
        if (quad) r.quadrature = tau(l, n, *quad);
        res.tau.push_back(r);
        wt.cell(static_cast<std::uint64_t>(l)).cell(r.value).cell(to_string(r.method));
        wt.cell(r.quadrature ? *r.quadrature : std::numeric_limits<double>::quiet_NaN()).end_row();
    }
    wt.close();

    const double nn = static_cast<double>(n);
    CsvWriter ww(cfg.out_dir + "/weights.csv", "weights", cfg.seed, {"label", "lo", "hi", "weight"});
    const std::vector<std::pair<std::string, std::pair<double, double>>> intervals{
        {"all", {0.0, 1.0}},
        {"up_to_1/n", {0.0, std::min(1.0, 1.0 / nn)}},
        {"heavy_tail", {1.0 / (2.0 * nn), std::min(1.0, 1.0 / nn)}},
        {"tau1_lower_interval", {1.0 / (3.0 * nn), std::min(1.0, 2.0 / nn)}},
    };
    for (const auto& [label, iv] : intervals) {
        ww.cell(label).cell(iv.first).cell(iv.second).cell(weight(marg, iv.first, iv.second)).end_row();
    }
    const auto b = tau1_bounds_check(marg, n);
    ww.cell("tau1").cell("").cell("").cell(b.tau1).end_row();
    ww.cell("tau1_lower_bound").cell("").cell("").cell(b.lower).end_row();
    ww.cell("tau1_upper_bound").cell("").cell("").cell(b.upper ? *b.upper : std::numeric_limits<double>::quiet_NaN()).end_row();
    ww.close();

    const FrequencyPrior check_prior{cfg.subpop_check_pi, cfg.subpop_check_N};
    CsvWriter wd(cfg.out_dir + "/decomposition.csv", "decomposition", cfg.seed,
                 {"instance", "lhs", "rhs", "gap", "unseen", "lhs_normalized_joint"});
    for (std::size_t i = 0; i < cfg.subpop_instances; ++i) {
        const std::vector<std::size_t> sizes(check_prior.N, cfg.subpop_support_size);
        const auto inst = make_mixture_instance(check_prior, sizes, cfg.subpop_check_n,
                                                RandomStream(derive_seed("subpop-instance", cfg.seed), i).next_u64());
        res.checks.push_back(error_decomposition_check(inst, check_prior));
        const auto& c = res.checks.back();
        wd.cell(static_cast<std::uint64_t>(i)).cell(c.lhs).cell(c.rhs).cell(c.gap).cell(c.unseen).cell(c.lhs_normalized_joint);
        wd.end_row();
    }
    wd.close();
    return res;
}

struct GmmRow {
    double sigma_t;
    double tv;
    ClusterStatus status;
};

inline std::vector<GmmRow> cmd_gmm(const ExperimentConfig& cfg) {
    prepare_output(cfg, cfg.out_dir);
    const auto d = static_cast<Eigen::Index>(cfg.gmm_dim);
    const Eigen::VectorXd mu1 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mu2 = Eigen::VectorXd::Zero(d);
    mu2[0] = cfg.gmm_distance;
    const double merge_at = merge_threshold_sigma(cfg.gmm_distance, cfg.gmm_epsilon);
    const double separate_at = separation_threshold_sigma(cfg.gmm_distance, cfg.gmm_epsilon);
    std::vector<GmmRow> rows;
    CsvWriter w(cfg.out_dir + "/gmm.csv", "gmm", cfg.seed,
                {"sigma_t", "tv", "status", "merge_threshold", "separation_threshold"});
    for (std::size_t i = 0; i < cfg.gmm_grid; ++i) {
        const double s = 0.999 * static_cast<double>(i) / static_cast<double>(cfg.gmm_grid - 1);
        const double tv = tv_at_noise(mu1, mu2, s);
        rows.push_back({s, tv, cluster_status(tv, cfg.gmm_epsilon)});
        w.cell(s).cell(tv).cell(to_string(rows.back().status)).cell(merge_at).cell(separate_at).end_row();
    }
    w.close();
    return rows;
}

}  // namespace memdiff
