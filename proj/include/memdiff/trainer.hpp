#pragma once

// Denoiser training: the x0-prediction loss on clean data, the ambient score
// matching loss on data noised once at level t_n, and the hybrid loop that
// splits diffusion time at t_n between the two.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "memdiff/denoiser_net.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/sample_set.hpp"
#include "memdiff/schedule.hpp"
#include "memdiff/scores.hpp"

namespace memdiff {

enum class LossMode { ddpm, ambient, hybrid };

inline std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::ddpm: return "ddpm";
        case LossMode::ambient: return "ambient";
        case LossMode::hybrid: return "hybrid";
    }
    return "?";
}

struct TrainConfig {
    double t_n = 0.0;
    std::size_t batch = 64;
    std::size_t iterations = 2000;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    LossMode mode = LossMode::hybrid;
    NetArchitecture arch{};

    void validate(const NoiseSchedule& sched) const {
        detail::require(t_n >= 0.0 && t_n <= sched.t_max(), "t_n must lie in [0, t_max]");
        detail::require(batch >= 1, "batch size must be at least 1");
        detail::require(learning_rate > 0.0, "learning rate must be positive");
        detail::require(mode != LossMode::ambient || t_n < sched.t_max(),
                        "ambient mode needs t_n < t_max");
    }
};

struct LossGrad {
    double loss;
    Vector grad;
};

namespace detail {

// Loss ||a h(x_t, t) + b x_t - target||^2 and its parameter gradient.
inline LossGrad affine_denoising_loss(const DenoiserNet& net, const VecRef& x_t, double sigma_t,
                                      double a, double b, const VecRef& target) {
    DenoiserNet::Cache cache;
    Points xb = x_t.transpose();
    const Points h = net.forward_batch(xb, Vector::Constant(1, sigma_t), &cache);
    const Vector r = a * h.row(0).transpose() + b * x_t - target;
    Points gh = (2.0 * a) * r.transpose();
    return {r.squaredNorm(), net.backward(cache, gh)};
}

}  // namespace detail

/// x_t = alpha x0 + sigma eps; loss ||h(x_t, t) - x0||^2.
inline LossGrad loss_ddpm(const DenoiserNet& net, const VecRef& x0, double t, const VecRef& eps,
                          const NoiseSchedule& sched) {
    const double s = sched.sigma(t);
    const Vector x_t = sched.alpha(t) * x0 + s * eps;
    return detail::affine_denoising_loss(net, x_t, s, 1.0, 0.0, x0);
}

/// x_t bridged up from x_tn; loss ||a h(x_t, t) + b x_t - x_tn||^2.
inline LossGrad loss_ambient(const DenoiserNet& net, const VecRef& x_tn, double t, double t_n,
                             const VecRef& eps, const NoiseSchedule& sched) {
    detail::require(t > t_n, "ambient loss requires t > t_n");
    const auto bridge = sched.bridge_coeffs(t, t_n);
    const Vector x_t = bridge.scale * x_tn + bridge.noise_std * eps;
    const auto c = ambient_denoiser_coeffs(t, t_n, sched);
    return detail::affine_denoising_loss(net, x_t, sched.sigma(t), c.a, c.b, x_tn);
}

/// Adam with bias-corrected moments.
class AdamOptimizer {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

    AdamOptimizer(std::size_t parameters, double learning_rate)
        : lr_(learning_rate),
          m_(Vector::Zero(static_cast<Eigen::Index>(parameters))),
          v_(Vector::Zero(static_cast<Eigen::Index>(parameters))) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
        v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEpsilon);
        }
    }

    std::size_t steps_taken() const noexcept { return t_; }

private:
    double lr_;
    Vector m_;
    Vector v_;
    std::size_t t_ = 0;
};

/// One draw of the training batch.
struct BatchItem {
    bool noisy = false;  ///< drawn from S_tn (ambient branch) rather than S
    Eigen::Index index = 0;
    double t = 0.0;
    Vector eps;

    /// Canonical order used for reduction.
    friend bool operator<(const BatchItem& l, const BatchItem& r) {
        if (l.noisy != r.noisy) return l.noisy < r.noisy;
        if (l.index != r.index) return l.index < r.index;
        if (l.t != r.t) return l.t < r.t;
        return std::lexicographical_compare(l.eps.data(), l.eps.data() + l.eps.size(), r.eps.data(),
                                            r.eps.data() + r.eps.size());
    }
};

/// Which loss each draw contributed to.
struct BranchCounts {
    std::size_t clean_draws = 0;
    std::size_t noisy_draws = 0;
    std::size_t ddpm_terms = 0;
    std::size_t ambient_terms = 0;
    std::size_t skipped = 0;  ///< noisy draws with no admissible t (t_n = t_max)

    BranchCounts& operator+=(const BranchCounts& o) {
        clean_draws += o.clean_draws;
        noisy_draws += o.noisy_draws;
        ddpm_terms += o.ddpm_terms;
        ambient_terms += o.ambient_terms;
        skipped += o.skipped;
        return *this;
    }
};

struct StepResult {
    double loss = 0.0;       ///< mean over the batch
    double ddpm_loss = std::numeric_limits<double>::quiet_NaN();     ///< mean over DDPM terms
    double ambient_loss = std::numeric_limits<double>::quiet_NaN();  ///< mean over ambient terms
    BranchCounts counts;
};

/// Draw the batch for `iteration` from the stream keyed by cfg.seed.
inline std::vector<BatchItem> draw_batch(Eigen::Index n, Eigen::Index d, const TrainConfig& cfg,
                                         const NoiseSchedule& sched, std::size_t iteration) {
    RandomStream rng(derive_seed("batch", cfg.seed), iteration);
    const double t_max = sched.t_max();
    const bool merged = sched.sigma(cfg.t_n) == 0.0;  // S_tn coincides with S
    std::vector<BatchItem> items(cfg.batch);
    for (auto& item : items) {
        switch (cfg.mode) {
            case LossMode::ddpm:
                item.noisy = false;
                item.index = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
                item.t = t_max * rng.uniform();
                break;
            case LossMode::ambient:
                item.noisy = true;
                item.index = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
                item.t = cfg.t_n + (t_max - cfg.t_n) * rng.uniform();
                break;
            case LossMode::hybrid: {
                const auto k = static_cast<Eigen::Index>(rng.below(2 * static_cast<std::uint64_t>(n)));
                item.noisy = merged || k >= n;
                item.index = k % n;
                const double u = rng.uniform();
                item.t = item.noisy ? cfg.t_n + (t_max - cfg.t_n) * u : cfg.t_n * u;
                break;
            }
        }
        item.eps.resize(d);
        for (Eigen::Index j = 0; j < d; ++j) item.eps[j] = rng.normal();
    }
    return items;
}

/// Mean loss and gradient of a batch, reduced in canonical item order.
inline std::pair<StepResult, Vector> batch_loss(const DenoiserNet& net, const Points& clean,
                                                const Points& noisy, std::vector<BatchItem> items,
                                                const TrainConfig& cfg, const NoiseSchedule& sched) {
    std::sort(items.begin(), items.end());
    const Eigen::Index d = clean.cols();
    const bool t_n_at_max = cfg.t_n >= sched.t_max();

    StepResult res;
    std::vector<const BatchItem*> active;
    std::vector<double> coeff_a, coeff_b;
    Points x_t(static_cast<Eigen::Index>(items.size()), d);
    Points target(static_cast<Eigen::Index>(items.size()), d);
    Vector sig(static_cast<Eigen::Index>(items.size()));
    for (const auto& item : items) {
        (item.noisy ? res.counts.noisy_draws : res.counts.clean_draws) += 1;
        const auto row = static_cast<Eigen::Index>(active.size());
        if (item.noisy) {
            if (t_n_at_max || !(item.t > cfg.t_n)) {
                ++res.counts.skipped;
                continue;
            }
            const auto bridge = sched.bridge_coeffs(item.t, cfg.t_n);
            const auto c = ambient_denoiser_coeffs(item.t, cfg.t_n, sched);
            x_t.row(row) = bridge.scale * noisy.row(item.index) + bridge.noise_std * item.eps.transpose();
            target.row(row) = noisy.row(item.index);
            coeff_a.push_back(c.a);
            coeff_b.push_back(c.b);
            ++res.counts.ambient_terms;
        } else {
            x_t.row(row) = sched.alpha(item.t) * clean.row(item.index) + sched.sigma(item.t) * item.eps.transpose();
            target.row(row) = clean.row(item.index);
            coeff_a.push_back(1.0);
            coeff_b.push_back(0.0);
            ++res.counts.ddpm_terms;
        }
        sig[row] = sched.sigma(item.t);
        active.push_back(&item);
    }

    Vector grad = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    const auto m = static_cast<Eigen::Index>(active.size());
    if (m == 0) return {res, grad};

    DenoiserNet::Cache cache;
    const Points xs = x_t.topRows(m);
    const Points h = net.forward_batch(xs, sig.head(m), &cache);
    Points gh(m, d);
    const double inv_b = 1.0 / static_cast<double>(items.size());
    double total = 0.0, ddpm_total = 0.0, amb_total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto r = (coeff_a[i] * h.row(i) + coeff_b[i] * xs.row(i) - target.row(i)).eval();
        const double li = r.squaredNorm();
        total += li;
        (active[static_cast<std::size_t>(i)]->noisy ? amb_total : ddpm_total) += li;
        gh.row(i) = (2.0 * coeff_a[i] * inv_b) * r;
    }
    res.loss = total * inv_b;
    if (res.counts.ddpm_terms > 0) res.ddpm_loss = ddpm_total / static_cast<double>(res.counts.ddpm_terms);
    if (res.counts.ambient_terms > 0) res.ambient_loss = amb_total / static_cast<double>(res.counts.ambient_terms);
    grad = net.backward(cache, gh);
    return {res, grad};
}

/// One optimizer update of Algorithm-1 style hybrid training. `clean` and
/// `noisy` are S and S_tn (row i of `noisy` is the noised copy of row i).
inline StepResult hybrid_step(DenoiserNet& net, AdamOptimizer& opt, const SampleSet& clean,
                              const SampleSet& noisy, const TrainConfig& cfg, const NoiseSchedule& sched,
                              std::size_t iteration) {
    detail::require(clean.size() >= 1 && noisy.size() >= 1, "training sets must be non-empty");
    detail::require(clean.size() == noisy.size() && clean.dim() == noisy.dim(),
                    "S and S_tn must have matching shapes");
    cfg.validate(sched);
    auto items = draw_batch(clean.size(), clean.dim(), cfg, sched, iteration);
    auto [res, grad] = batch_loss(net, clean.points(), noisy.points(), std::move(items), cfg, sched);
    if (!std::isfinite(res.loss) || !grad.allFinite()) {
        throw TrainingDiverged(iteration, "non-finite training loss");
    }
    Vector params = net.parameters();
    opt.step(params, grad);
    net.set_parameters(params);
    return res;
}

struct TrainResult {
    std::shared_ptr<const DenoiserNet> net;
    Normalizer normalizer;
    SampleSet normalized_clean;
    SampleSet noisy;  ///< S_tn, in normalized coordinates
    std::vector<StepResult> history;
    BranchCounts counts;
    std::size_t noisy_set_constructions = 0;
};

/// Normalize S, noise it once at t_n, then run cfg.iterations hybrid steps.
inline TrainResult train(const SampleSet& data, TrainConfig cfg, const NoiseSchedule& sched) {
    detail::require(data.size() >= 2, "training needs at least two points");
    cfg.arch.data_dim = static_cast<std::uint32_t>(data.dim());
    cfg.validate(sched);

    const auto normalizer = Normalizer::fit(data.points());
    SampleSet clean(normalizer.apply(data.points()));
    const double t_n = cfg.mode == LossMode::ddpm ? 0.0 : cfg.t_n;
    std::size_t constructions = 0;
    SampleSet noisy = [&] {
        ++constructions;
        return noise_dataset(clean, sched, t_n, derive_seed("noisy-set", cfg.seed));
    }();

    DenoiserNet net(cfg.arch, derive_seed("init", cfg.seed));
    AdamOptimizer opt(net.parameter_count(), cfg.learning_rate);
    std::vector<StepResult> history;
    history.reserve(cfg.iterations);
    BranchCounts counts;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        history.push_back(hybrid_step(net, opt, clean, noisy, cfg, sched, it));
        counts += history.back().counts;
    }
    return {std::make_shared<const DenoiserNet>(std::move(net)), normalizer, std::move(clean),
            std::move(noisy), std::move(history), counts, constructions};
}

}  // namespace memdiff
