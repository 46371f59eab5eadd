#pragma once

// Experiment configuration: flat "section.key = value" lines, '#' comments.
// Unknown or repeated keys are rejected; lists are comma-separated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memdiff/csv.hpp"
#include "memdiff/errors.hpp"

namespace memdiff {

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    std::string dataset_kind = "mixture8";  // mixture8 | file
    std::string dataset_path;
    std::string dataset_reference_path;
    std::size_t dataset_n = 32;
    std::size_t mixture_components = 8;
    double mixture_radius = 2.0;
    double mixture_stddev = 0.35;

    std::string schedule_kind = "linear";  // linear | tabulated
    double sigma_max = 0.995;
    double t_min = 1e-3;
    std::vector<double> knot_times;
    std::vector<double> knot_sigmas;

    double sigma_tn = 0.4;
    std::string loss_mode = "hybrid";  // ddpm | ambient | hybrid
    std::size_t batch = 32;
    std::size_t iterations = 40000;
    double learning_rate = 1e-3;
    std::size_t hidden_width = 128;
    std::size_t hidden_layers = 2;
    std::size_t fourier_frequencies = 8;

    std::vector<double> sweep_sigma_tn{0.0, 0.1, 0.4, 0.7};

    std::size_t sample_n = 2048;
    std::size_t steps = 64;
    double stop_t = 0.0;  // 0 selects t_min
    bool record = false;
    std::string checkpoint;

    std::vector<double> similarity_thresholds{0.9, 0.95, 0.99};
    double delta_factor = 0.05;
    std::size_t reference_n = 2048;
    std::string eval_generated;
    std::string eval_train;

    std::vector<double> mi_sigma_grid{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
                                      0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99};
    std::size_t mi_dim = 1;
    std::size_t mi_m = 1;
    double mi_prior_variance = 1.0;
    std::size_t mi_draws = 1000000;

    std::vector<double> subpop_pi{1.0, 0.5, 0.25};
    std::size_t subpop_N = 100;
    std::size_t subpop_n = 20;
    std::size_t subpop_zipf_k = 0;  // > 0 replaces subpop.pi by 1/j, j = 1..k
    std::vector<double> subpop_check_pi{1.0, 0.25};
    std::size_t subpop_check_N = 3;
    std::size_t subpop_check_n = 2;
    std::size_t subpop_instances = 20;
    std::size_t subpop_support_size = 2;

    std::size_t gmm_dim = 2;
    double gmm_distance = 0.01;
    double gmm_epsilon = 1e-3;
    std::size_t gmm_grid = 100;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos) {
        try {
            return std::stoull(v);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_double(key, trim(tok)));
    return out;
}

inline std::string print_list(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_double(xs[i]);
    return s;
}

struct ConfigKey {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
    using C = ExperimentConfig;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto real = [&k](std::string name, double C::*f) {
            k.push_back({name, [f, name](C& c, const std::string& v) { c.*f = parse_double(name, v); },
                         [f](const C& c) { return format_double(c.*f); }});
        };
        auto count = [&k](std::string name, std::size_t C::*f) {
            k.push_back({name, [f, name](C& c, const std::string& v) { c.*f = parse_count(name, v); },
                         [f](const C& c) { return std::to_string(c.*f); }});
        };
        auto text = [&k](std::string name, std::string C::*f, std::initializer_list<const char*> allowed) {
            std::vector<std::string> opts(allowed.begin(), allowed.end());
            k.push_back({name,
                         [f, name, opts](C& c, const std::string& v) {
                             if (!opts.empty() && std::find(opts.begin(), opts.end(), v) == opts.end()) {
                                 throw ConfigError(name + ": unsupported value '" + v + "'");
                             }
                             c.*f = v;
                         },
                         [f](const C& c) { return c.*f; }});
        };
        auto list = [&k](std::string name, std::vector<double> C::*f) {
            k.push_back({name, [f, name](C& c, const std::string& v) { c.*f = parse_list(name, v); },
                         [f](const C& c) { return print_list(c.*f); }});
        };
        k.push_back({"seed", [](C& c, const std::string& v) { c.seed = parse_count("seed", v); },
                     [](const C& c) { return std::to_string(c.seed); }});
        text("output.dir", &C::out_dir, {});

        text("dataset.kind", &C::dataset_kind, {"mixture8", "file"});
        text("dataset.path", &C::dataset_path, {});
        text("dataset.reference_path", &C::dataset_reference_path, {});
        count("dataset.n", &C::dataset_n);
        count("dataset.components", &C::mixture_components);
        real("dataset.radius", &C::mixture_radius);
        real("dataset.stddev", &C::mixture_stddev);

        text("schedule.kind", &C::schedule_kind, {"linear", "tabulated"});
        real("schedule.sigma_max", &C::sigma_max);
        real("schedule.t_min", &C::t_min);
        list("schedule.knot_times", &C::knot_times);
        list("schedule.knot_sigmas", &C::knot_sigmas);

        real("train.sigma_tn", &C::sigma_tn);
        text("train.loss_mode", &C::loss_mode, {"ddpm", "ambient", "hybrid"});
        count("train.batch", &C::batch);
        count("train.iterations", &C::iterations);
        real("train.learning_rate", &C::learning_rate);
        count("train.hidden_width", &C::hidden_width);
        count("train.hidden_layers", &C::hidden_layers);
        count("train.fourier_frequencies", &C::fourier_frequencies);

        list("sweep.sigma_tn", &C::sweep_sigma_tn);

        count("sampler.n", &C::sample_n);
        count("sampler.steps", &C::steps);
        real("sampler.stop_t", &C::stop_t);
        k.push_back({"sampler.record", [](C& c, const std::string& v) { c.record = parse_bool("sampler.record", v); },
                     [](const C& c) { return std::string(c.record ? "true" : "false"); }});
        text("sampler.checkpoint", &C::checkpoint, {});

        list("metrics.similarity_thresholds", &C::similarity_thresholds);
        real("metrics.delta_factor", &C::delta_factor);
        count("metrics.reference_n", &C::reference_n);
        text("eval.generated", &C::eval_generated, {});
        text("eval.train", &C::eval_train, {});

        list("mi.sigma_grid", &C::mi_sigma_grid);
        count("mi.dim", &C::mi_dim);
        count("mi.m", &C::mi_m);
        real("mi.prior_variance", &C::mi_prior_variance);
        count("mi.draws", &C::mi_draws);

        list("subpop.pi", &C::subpop_pi);
        count("subpop.N", &C::subpop_N);
        count("subpop.n", &C::subpop_n);
        count("subpop.zipf_k", &C::subpop_zipf_k);
        list("subpop.check_pi", &C::subpop_check_pi);
        count("subpop.check_N", &C::subpop_check_N);
        count("subpop.check_n", &C::subpop_check_n);
        count("subpop.instances", &C::subpop_instances);
        count("subpop.support_size", &C::subpop_support_size);

        count("gmm.dim", &C::gmm_dim);
        real("gmm.distance", &C::gmm_distance);
        real("gmm.epsilon", &C::gmm_epsilon);
        count("gmm.grid", &C::gmm_grid);
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Applies one key; unknown keys raise ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys()) {
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

inline void validate_config(const ExperimentConfig& c) {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    need(c.dataset_kind != "file" || !c.dataset_path.empty(), "dataset.path is required for dataset.kind = file");
    need(c.dataset_n >= 2, "dataset.n must be at least 2");
    need(c.mixture_components >= 1, "dataset.components must be at least 1");
    need(c.mixture_radius >= 0.0, "dataset.radius must be non-negative");
    need(c.mixture_stddev > 0.0, "dataset.stddev must be positive");
    need(c.sigma_max > 0.0 && c.sigma_max < 1.0, "schedule.sigma_max must lie in (0, 1)");
    need(c.t_min > 0.0 && c.t_min < 1.0, "schedule.t_min must lie in (0, 1)");
    need(c.schedule_kind != "tabulated" || (c.knot_times.size() >= 2 && c.knot_times.size() == c.knot_sigmas.size()),
         "tabulated schedules need matching knot lists");
    need(c.sigma_tn >= 0.0 && c.sigma_tn < 1.0, "train.sigma_tn must lie in [0, 1)");
    need(c.batch >= 1, "train.batch must be at least 1");
    need(c.learning_rate > 0.0, "train.learning_rate must be positive");
    need(c.hidden_width >= 1, "train.hidden_width must be at least 1");
    need(c.hidden_layers == 2, "train.hidden_layers must be 2 (the only supported depth)");
    need(c.fourier_frequencies >= 1, "train.fourier_frequencies must be at least 1");
    for (double s : c.sweep_sigma_tn) need(s >= 0.0 && s < 1.0, "sweep.sigma_tn entries must lie in [0, 1)");
    need(c.sample_n >= 1 && c.steps >= 1, "sampler.n and sampler.steps must be at least 1");
    need(c.stop_t >= 0.0 && c.stop_t < 1.0, "sampler.stop_t must lie in [0, 1)");
    for (double s : c.similarity_thresholds) need(s >= -1.0 && s <= 1.0, "similarity thresholds must lie in [-1, 1]");
    need(c.delta_factor > 0.0, "metrics.delta_factor must be positive");
    need(c.reference_n >= 1, "metrics.reference_n must be at least 1");
    for (double s : c.mi_sigma_grid) need(s > 0.0 && s < 1.0, "mi.sigma_grid entries must lie in (0, 1)");
    need(c.mi_dim >= 1 && c.mi_m >= 1, "mi.dim and mi.m must be at least 1");
    need(c.mi_prior_variance >= 0.0, "mi.prior_variance must be non-negative");
    need(c.mi_draws == 0 || c.mi_draws >= 10000, "mi.draws must be 0 or at least 1e4");
    need(c.subpop_zipf_k > 0 || !c.subpop_pi.empty(), "subpop.pi must be non-empty");
    for (double p : c.subpop_pi) need(p > 0.0, "subpop.pi entries must be positive");
    for (double p : c.subpop_check_pi) need(p > 0.0, "subpop.check_pi entries must be positive");
    need(c.subpop_N >= 1 && c.subpop_n >= 1, "subpop.N and subpop.n must be at least 1");
    need(c.subpop_support_size >= 1, "subpop.support_size must be at least 1");
    need(c.gmm_dim >= 1 && c.gmm_grid >= 2, "gmm.dim must be >= 1 and gmm.grid >= 2");
    need(c.gmm_distance >= 0.0, "gmm.distance must be non-negative");
    need(c.gmm_epsilon > 0.0 && c.gmm_epsilon < 1.0, "gmm.epsilon must lie in (0, 1)");
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
    ExperimentConfig cfg;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key '" + key + "' repeats line " +
                              std::to_string(it->second));
        }
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open config file");
    return parse_config(in, path);
}

/// Every key with its resolved value, one "key = value" line each.
inline std::string render_config(const ExperimentConfig& cfg) {
    std::string s;
    for (const auto& k : detail::config_keys()) s += k.name + " = " + k.get(cfg) + "\n";
    return s;
}

}  // namespace memdiff
