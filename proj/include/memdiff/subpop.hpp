#pragma once

// Random-frequency subpopulation model: N components, each drawing a raw
// frequency uniformly from a list pi, then normalizing. The single-component
// marginal pi-bar is the law of alpha = p / (p + S) with p uniform over pi and
// S the sum of N - 1 further independent picks; every path below (exact
// enumeration, Monte Carlo, grid quadrature) describes pi-bar through the law
// of S.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/sample_set.hpp"
#include "memdiff/schedule.hpp"
#include "memdiff/scores.hpp"

namespace memdiff {

struct FrequencyPrior {
    std::vector<double> pi;  ///< candidate raw frequencies, picked uniformly
    std::size_t N = 1;       ///< number of subpopulations

    void validate() const {
        detail::require(!pi.empty(), "frequency list must be non-empty");
        detail::require(N >= 1, "need at least one subpopulation");
        for (double p : pi) detail::require(std::isfinite(p) && p > 0.0, "frequencies must be positive");
    }
};

/// Zipf-type list pi_j = 1 / j, j = 1..k.
inline FrequencyPrior zipf_prior(std::size_t k, std::size_t N) {
    FrequencyPrior p;
    p.N = N;
    for (std::size_t j = 1; j <= k; ++j) p.pi.push_back(1.0 / static_cast<double>(j));
    return p;
}

/// One draw of the normalized mixing weights D.
inline std::vector<double> sample_mixing_weights(const FrequencyPrior& prior, std::uint64_t seed) {
    prior.validate();
    RandomStream rng(seed, 0);
    std::vector<double> d(prior.N);
    for (auto& v : d) v = prior.pi[rng.below(prior.pi.size())];
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    for (auto& v : d) v /= total;
    return d;
}

enum class MarginalMethod { enumeration, monte_carlo, quadrature };

inline std::string to_string(MarginalMethod m) {
    switch (m) {
        case MarginalMethod::enumeration: return "enumeration";
        case MarginalMethod::monte_carlo: return "monte_carlo";
        case MarginalMethod::quadrature: return "quadrature";
    }
    return "?";
}

class FrequencyMarginal {
public:
    FrequencyMarginal(MarginalMethod method, const FrequencyPrior& prior, std::vector<double> sum_values,
                      std::vector<double> sum_probs)
        : method_(method), pi_(prior.pi), N_(prior.N), s_(std::move(sum_values)), ps_(std::move(sum_probs)) {}

    MarginalMethod method() const noexcept { return method_; }
    std::size_t components() const noexcept { return N_; }
    const std::vector<double>& sum_values() const noexcept { return s_; }
    const std::vector<double>& sum_probs() const noexcept { return ps_; }

    /// Visits every (alpha, one_minus_alpha, probability) term.
    template <class F>
    void for_each(F&& f) const {
        const double pk = 1.0 / static_cast<double>(pi_.size());
        for (std::size_t i = 0; i < s_.size(); ++i) {
            for (double p : pi_) {
                const double denom = p + s_[i];
                f(p / denom, s_[i] / denom, ps_[i] * pk);
            }
        }
    }

    template <class F>
    double expect(F&& g) const {
        double acc = 0.0;
        for_each([&](double a, double, double w) { acc += w * g(a); });
        return acc;
    }

    /// log E[alpha^p (1 - alpha)^q], evaluated with a streaming log-sum-exp.
    double log_moment(double p, double q) const {
        constexpr double kNegInf = -std::numeric_limits<double>::infinity();
        const double log_k = std::log(static_cast<double>(pi_.size()));
        std::vector<double> log_pi(pi_.size());
        for (std::size_t j = 0; j < pi_.size(); ++j) log_pi[j] = std::log(pi_[j]);
        double top = kNegInf;
        double acc = 0.0;
        for (std::size_t i = 0; i < s_.size(); ++i) {
            if (ps_[i] <= 0.0) continue;
            const double base = std::log(ps_[i]) - log_k;
            const double log_s = s_[i] > 0.0 ? std::log(s_[i]) : kNegInf;
            if (q != 0.0 && log_s == kNegInf) continue;  // (1 - alpha)^q vanishes
            for (std::size_t j = 0; j < pi_.size(); ++j) {
                const double log_denom = std::log(pi_[j] + s_[i]);
                double v = base;
                if (p != 0.0) v += p * (log_pi[j] - log_denom);
                if (q != 0.0) v += q * (log_s - log_denom);
                if (v > top) {
                    acc = acc * std::exp(top - v) + 1.0;
                    top = v;
                } else {
                    acc += std::exp(v - top);
                }
            }
        }
        if (top == kNegInf) return kNegInf;
        return top + std::log(acc);
    }

    /// Distinct support points of pi-bar with their probabilities, ascending.
    std::vector<std::pair<double, double>> atoms() const {
        std::vector<std::pair<double, double>> out;
        out.reserve(s_.size() * pi_.size());
        for_each([&](double a, double, double w) { out.emplace_back(a, w); });
        std::sort(out.begin(), out.end());
        std::vector<std::pair<double, double>> merged;
        for (const auto& [a, w] : out) {
            if (!merged.empty() && merged.back().first == a) {
                merged.back().second += w;
            } else {
                merged.emplace_back(a, w);
            }
        }
        return merged;
    }

private:
    MarginalMethod method_;
    std::vector<double> pi_;
    std::size_t N_;
    std::vector<double> s_;
    std::vector<double> ps_;
};

namespace detail {

inline void enumerate_compositions(std::size_t parts, std::vector<std::size_t>& counts,
                                   std::size_t index, std::size_t left,
                                   const std::vector<double>& pi, double log_norm,
                                   std::vector<double>& values, std::vector<double>& probs) {
    if (index + 1 == parts) {
        counts[index] = left;
        double s = 0.0;
        double logp = log_norm;
        for (std::size_t j = 0; j < parts; ++j) {
            s += static_cast<double>(counts[j]) * pi[j];
            logp -= std::lgamma(static_cast<double>(counts[j]) + 1.0);
        }
        values.push_back(s);
        probs.push_back(std::exp(logp));
        return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
        counts[index] = c;
        enumerate_compositions(parts, counts, index + 1, left - c, pi, log_norm, values, probs);
    }
}

}  // namespace detail

/// Exact law of S by multinomial enumeration of the N - 1 extra picks.
inline FrequencyMarginal enumerate_marginal(const FrequencyPrior& prior) {
    prior.validate();
    const std::size_t k = prior.pi.size();
    const std::size_t draws = prior.N - 1;
    std::vector<double> values, probs;
    std::vector<std::size_t> counts(k, 0);
    const double log_norm = std::lgamma(static_cast<double>(draws) + 1.0) -
                            static_cast<double>(draws) * std::log(static_cast<double>(k));
    detail::enumerate_compositions(k, counts, 0, draws, prior.pi, log_norm, values, probs);
    return FrequencyMarginal(MarginalMethod::enumeration, prior, std::move(values), std::move(probs));
}

/// Empirical law of S from `draws` independent sums; draw m uses stream m.
inline FrequencyMarginal monte_carlo_marginal(const FrequencyPrior& prior, std::size_t draws, std::uint64_t seed) {
    prior.validate();
    detail::require(draws >= 1, "Monte Carlo marginal needs at least one draw");
    std::vector<double> values(draws);
    const std::size_t k = prior.pi.size();
    for (std::size_t m = 0; m < draws; ++m) {
        RandomStream rng(seed, m);
        double s = 0.0;
        for (std::size_t i = 1; i < prior.N; ++i) s += prior.pi[rng.below(k)];
        values[m] = s;
    }
    std::vector<double> probs(draws, 1.0 / static_cast<double>(draws));
    return FrequencyMarginal(MarginalMethod::monte_carlo, prior, std::move(values), std::move(probs));
}

/// Law of S on a uniform grid: each pick is split linearly between its two
/// neighbouring nodes (mean preserving), then N - 1 picks are convolved.
inline FrequencyMarginal quadrature_marginal(const FrequencyPrior& prior, std::size_t target_nodes = 1u << 15) {
    prior.validate();
    const std::size_t draws = prior.N - 1;
    if (draws == 0) return FrequencyMarginal(MarginalMethod::quadrature, prior, {0.0}, {1.0});
    const std::size_t k = prior.pi.size();
    const double top = *std::max_element(prior.pi.begin(), prior.pi.end());
    const std::size_t per_pick = std::max<std::size_t>(64, (target_nodes + draws - 1) / draws);
    const double h = top / static_cast<double>(per_pick);

    std::vector<std::pair<std::size_t, double>> kernel;  // (node offset, mass)
    for (double p : prior.pi) {
        const double pos = p / h;
        const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), per_pick);
        const double frac = pos - static_cast<double>(lo);
        kernel.emplace_back(lo, (1.0 - frac) / static_cast<double>(k));
        if (frac > 0.0) kernel.emplace_back(lo + 1, frac / static_cast<double>(k));
    }
    std::vector<double> pmf(draws * (per_pick + 1) + 1, 0.0);
    pmf[0] = 1.0;
    std::size_t width = 1;  // nodes currently in use
    std::vector<double> next(pmf.size());
    for (std::size_t step = 0; step < draws; ++step) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t g = 0; g < width; ++g) {
            if (pmf[g] == 0.0) continue;
            for (const auto& [off, w] : kernel) next[g + off] += pmf[g] * w;
        }
        width = std::min(pmf.size(), width + per_pick + 1);
        pmf.swap(next);
    }
    std::vector<double> values, probs;
    for (std::size_t g = 0; g < width; ++g) {
        if (pmf[g] > 0.0) {
            values.push_back(static_cast<double>(g) * h);
            probs.push_back(pmf[g]);
        }
    }
    return FrequencyMarginal(MarginalMethod::quadrature, prior, std::move(values), std::move(probs));
}

struct MarginalOptions {
    double enumeration_limit = 1e6;       ///< enumerate when k^N is at most this
    std::size_t monte_carlo_draws = 1u << 18;
    std::uint64_t seed = 0;
};

/// Enumeration when k^N <= limit, Monte Carlo otherwise.
inline FrequencyMarginal frequency_marginal(const FrequencyPrior& prior, const MarginalOptions& opt = {}) {
    prior.validate();
    const double log_size = static_cast<double>(prior.N) * std::log(static_cast<double>(prior.pi.size()));
    if (log_size <= std::log(opt.enumeration_limit) + 1e-12) return enumerate_marginal(prior);
    return monte_carlo_marginal(prior, opt.monte_carlo_draws, opt.seed);
}

/// E[a^(l+1) (1-a)^(n-l)] / E[a^l (1-a)^(n-l)]; l = 0 is the unseen-component
/// coefficient.
inline double tau_coefficient(std::size_t ell, std::size_t n, const FrequencyMarginal& marg) {
    detail::require(ell <= n, "tau needs ell <= n");
    const double q = static_cast<double>(n - ell);
    const double num = marg.log_moment(static_cast<double>(ell) + 1.0, q);
    const double den = marg.log_moment(static_cast<double>(ell), q);
    if (den == -std::numeric_limits<double>::infinity()) {
        throw DegeneratePrior("tau denominator vanishes for ell = " + std::to_string(ell));
    }
    return std::exp(num - den);
}

inline double tau(std::size_t ell, std::size_t n, const FrequencyMarginal& marg) {
    detail::require(ell >= 1 && ell <= n, "tau needs 1 <= ell <= n");
    return tau_coefficient(ell, n, marg);
}

struct TauReport {
    double value = 0.0;
    MarginalMethod method = MarginalMethod::enumeration;
    std::optional<double> quadrature;  ///< cross-check value, Monte Carlo path only
};

inline TauReport tau_report(std::size_t ell, std::size_t n, const FrequencyPrior& prior,
                            const MarginalOptions& opt = {}) {
    const auto marg = frequency_marginal(prior, opt);
    TauReport r;
    r.value = tau(ell, n, marg);
    r.method = marg.method();
    if (r.method == MarginalMethod::monte_carlo) r.quadrature = tau(ell, n, quadrature_marginal(prior));
    return r;
}

inline double tau(std::size_t ell, std::size_t n, const FrequencyPrior& prior) {
    return tau_report(ell, n, prior).value;
}

/// N E[alpha 1{a <= alpha <= b}].
inline double weight(const FrequencyMarginal& marg, double a, double b) {
    detail::require(0.0 <= a && a <= b && b <= 1.0, "weight interval must satisfy 0 <= a <= b <= 1");
    return static_cast<double>(marg.components()) *
           marg.expect([&](double x) { return (x >= a && x <= b) ? x : 0.0; });
}

inline double weight(const FrequencyPrior& prior, double a, double b) {
    return weight(frequency_marginal(prior), a, b);
}

/// weight([1/(2n), 1/n]) >= c.
inline bool heavy_tail_predicate(const FrequencyMarginal& marg, std::size_t n, double c) {
    detail::require(c > 0.0, "c must be positive");
    detail::require(n >= 1, "n must be at least 1");
    const double nn = static_cast<double>(n);
    return weight(marg, 1.0 / (2.0 * nn), 1.0 / nn) >= c;
}

struct Tau1Bounds {
    double tau1 = 0.0;
    double lower = 0.0;  ///< weight([1/(3n), 2/n]) / (5n)
    bool lower_holds = false;
    std::optional<double> theta;  ///< smallest certified gap parameter
    std::optional<double> upper;  ///< 2 theta
    bool upper_holds = true;      ///< vacuous when no theta is certified
};

/// Lower bound tau_1 >= weight([1/(3n), 2/n]) / (5n), and the upper bound
/// tau_1 <= 2 theta whenever some theta <= 1/(2n) leaves (theta, t/n] empty,
/// with t = ln(1 / (theta beta)) and beta = weight([0, theta]). Candidate
/// thetas are the atoms of pi-bar, since beta only changes there.
inline Tau1Bounds tau1_bounds_check(const FrequencyMarginal& marg, std::size_t n) {
    detail::require(n >= 1, "n must be at least 1");
    const double nn = static_cast<double>(n);
    Tau1Bounds r;
    r.tau1 = tau(1, n, marg);
    r.lower = weight(marg, 1.0 / (3.0 * nn), std::min(1.0, 2.0 / nn)) / (5.0 * nn);
    r.lower_holds = r.tau1 >= r.lower;

    const auto atoms = marg.atoms();
    const double big_n = static_cast<double>(marg.components());
    double beta = 0.0;
    for (std::size_t i = 0; i < atoms.size() && atoms[i].first <= 1.0 / (2.0 * nn); ++i) {
        beta += big_n * atoms[i].first * atoms[i].second;
        const double theta = atoms[i].first;
        const double t = std::log(1.0 / (theta * beta));
        const bool gap = i + 1 == atoms.size() || atoms[i + 1].first > t / nn;
        if (gap) {
            r.theta = theta;
            r.upper = 2.0 * theta;
            r.upper_holds = r.tau1 <= 2.0 * theta;
            break;
        }
    }
    return r;
}

/// A finite mixture with disjoint supports. Points are global ids
/// 0..point_count()-1; component i owns supports[i] and is uniform there.
struct MixtureInstance {
    std::vector<std::vector<std::size_t>> supports;
    std::vector<double> weights;       ///< the drawn D
    std::vector<std::size_t> dataset;  ///< Z, as point ids
    std::vector<double> loss;          ///< L(x), already averaged over the algorithm's randomness

    std::size_t point_count() const noexcept { return loss.size(); }

    void validate() const {
        detail::require(!supports.empty(), "mixture needs at least one component");
        std::set<std::size_t> seen;
        for (const auto& s : supports) {
            detail::require(!s.empty(), "component supports must be non-empty");
            for (std::size_t x : s) {
                detail::require(x < point_count(), "support point id out of range");
                detail::require(seen.insert(x).second, "component supports must be disjoint");
            }
        }
        detail::require(weights.empty() || weights.size() == supports.size(), "one weight per component");
        for (std::size_t z : dataset) detail::require(z < point_count(), "dataset point id out of range");
        for (double l : loss) detail::require(std::isfinite(l) && l >= 0.0, "losses must be finite and non-negative");
        for (std::size_t x = 0; x < point_count(); ++x) {
            detail::require(seen.count(x) == 1, "every point must belong to a component");
        }
    }

    /// Component owning each point id.
    std::vector<std::size_t> owner() const {
        std::vector<std::size_t> o(point_count());
        for (std::size_t i = 0; i < supports.size(); ++i) {
            for (std::size_t x : supports[i]) o[x] = i;
        }
        return o;
    }

    /// Number of dataset entries falling in each component.
    std::vector<std::size_t> representatives() const {
        const auto o = owner();
        std::vector<std::size_t> c(supports.size(), 0);
        for (std::size_t z : dataset) ++c[o[z]];
        return c;
    }
};

/// Random instance: D from the prior, Z i.i.d. from M_D, losses uniform on [0, 1).
inline MixtureInstance make_mixture_instance(const FrequencyPrior& prior, const std::vector<std::size_t>& support_sizes,
                                             std::size_t n, std::uint64_t seed) {
    prior.validate();
    detail::require(support_sizes.size() == prior.N, "one support size per component");
    MixtureInstance inst;
    std::size_t next = 0;
    for (std::size_t s : support_sizes) {
        detail::require(s >= 1, "support sizes must be positive");
        std::vector<std::size_t> ids(s);
        std::iota(ids.begin(), ids.end(), next);
        next += s;
        inst.supports.push_back(std::move(ids));
    }
    inst.weights = sample_mixing_weights(prior, derive_seed("mixing-weights", seed));
    RandomStream rng(derive_seed("dataset", seed), 0);
    for (std::size_t j = 0; j < n; ++j) {
        const double u = rng.uniform();
        std::size_t comp = 0;
        double cum = inst.weights[0];
        while (comp + 1 < inst.weights.size() && u >= cum) cum += inst.weights[++comp];
        const auto& sup = inst.supports[comp];
        inst.dataset.push_back(sup[rng.below(sup.size())]);
    }
    RandomStream lrng(derive_seed("loss-table", seed), 0);
    inst.loss.resize(next);
    for (auto& l : inst.loss) l = lrng.uniform();
    return inst;
}

struct DecompositionCheck {
    double lhs = 0.0;        ///< expected loss under the posterior over frequencies given Z
    double rhs = 0.0;        ///< unseen + sum_l tau_l errn(l)
    double gap = 0.0;
    double unseen = 0.0;
    std::vector<double> errn;            ///< index l = 0..n (entry 0 unused)
    std::vector<double> tau;             ///< index l = 0..n, NaN for counts no component has
    std::vector<double> posterior_mean;  ///< E[D_i | Z] per component, by enumeration
    std::vector<std::size_t> representatives;
    double lhs_normalized_joint = 0.0;   ///< same expectation under the exactly normalized D
};

/// Enumerates the posterior over frequency vectors alpha in supp(pi-bar)^N,
/// proportional to prod_i pibar(alpha_i) alpha_i^l_i (1 - alpha_i)^(n - l_i),
/// and compares the expected loss with its tau decomposition.
inline DecompositionCheck error_decomposition_check(const MixtureInstance& inst, const FrequencyPrior& prior) {
    inst.validate();
    prior.validate();
    const std::size_t N = inst.supports.size();
    const std::size_t n = inst.dataset.size();
    detail::require(prior.N == N, "prior and instance disagree on the number of components");
    detail::require(N <= 4 && prior.pi.size() <= 3 && n >= 1 && n <= 3,
                    "decomposition check needs N <= 4, |pi| <= 3, 1 <= n <= 3");

    DecompositionCheck out;
    out.representatives = inst.representatives();
    const auto owner = inst.owner();
    const auto marg = enumerate_marginal(prior);
    const auto atoms = marg.atoms();

    // Component-level loss mass sum_{x in X_i} M_i(x) L(x).
    std::vector<double> mass(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t x : inst.supports[i]) mass[i] += inst.loss[x] / static_cast<double>(inst.supports[i].size());
    }

    // Left side: odometer over atom indices.
    const std::size_t K = atoms.size();
    std::vector<std::size_t> idx(N, 0);
    std::vector<double> num(N, 0.0);
    double total = 0.0;
    for (;;) {
        double w = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double a = atoms[idx[i]].first;
            const auto l = out.representatives[i];
            w *= atoms[idx[i]].second * std::pow(a, static_cast<double>(l)) *
                 std::pow(1.0 - a, static_cast<double>(n - l));
        }
        total += w;
        for (std::size_t i = 0; i < N; ++i) num[i] += w * atoms[idx[i]].first;
        std::size_t pos = 0;
        while (pos < N && ++idx[pos] == K) idx[pos++] = 0;
        if (pos == N) break;
    }
    if (!(total > 0.0)) throw DegeneratePrior("posterior over frequencies has zero mass");
    out.posterior_mean.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        out.posterior_mean[i] = num[i] / total;
        out.lhs += out.posterior_mean[i] * mass[i];
    }

    // Right side from the closed-form coefficients.
    // Only counts that occur are needed; others may have a vanishing denominator.
    out.tau.assign(n + 1, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t l : out.representatives) {
        if (std::isnan(out.tau[l])) out.tau[l] = tau_coefficient(l, n, marg);
    }
    out.errn.assign(n + 1, 0.0);
    const std::set<std::size_t> in_z(inst.dataset.begin(), inst.dataset.end());
    for (std::size_t x = 0; x < inst.point_count(); ++x) {
        const std::size_t i = owner[x];
        const double mx = inst.loss[x] / static_cast<double>(inst.supports[i].size());
        const std::size_t l = out.representatives[i];
        if (in_z.count(x)) {
            out.errn[l] += mx;
        } else {
            out.unseen += out.tau[l] * mx;
        }
    }
    out.rhs = out.unseen;
    for (std::size_t l = 1; l <= n; ++l) {
        if (out.errn[l] != 0.0) out.rhs += out.tau[l] * out.errn[l];
    }
    out.gap = std::abs(out.lhs - out.rhs);

    // Diagnostic: normalized D with likelihood prod_j D_{i(z_j)}.
    const std::size_t k = prior.pi.size();
    std::vector<std::size_t> pick(N, 0);
    std::vector<double> jnum(N, 0.0);
    double jtotal = 0.0;
    for (;;) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += prior.pi[pick[i]];
        double like = 1.0;
        for (std::size_t z : inst.dataset) like *= prior.pi[pick[owner[z]]] / s;
        jtotal += like;
        for (std::size_t i = 0; i < N; ++i) jnum[i] += like * prior.pi[pick[i]] / s;
        std::size_t pos = 0;
        while (pos < N && ++pick[pos] == k) pick[pos++] = 0;
        if (pos == N) break;
    }
    for (std::size_t i = 0; i < N; ++i) out.lhs_normalized_joint += jnum[i] / jtotal * mass[i];
    return out;
}

/// Noise-prediction loss of the empirical optimal denoiser fitted to the
/// dataset points, at one fixed time: L(x) = mean ||eps_hat(x_t) - eps||^2.
inline std::vector<double> noise_prediction_loss_table(const Points& coords, const std::vector<std::size_t>& dataset,
                                                       const NoiseSchedule& sched, double t, std::size_t draws,
                                                       std::uint64_t seed) {
    detail::require(!dataset.empty(), "dataset must be non-empty");
    detail::require(draws >= 1, "need at least one noise draw");
    detail::require(t >= sched.t_min() && t <= sched.t_max(), "time outside [t_min, t_max]");
    Points train(static_cast<Eigen::Index>(dataset.size()), coords.cols());
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        detail::require(dataset[j] < static_cast<std::size_t>(coords.rows()), "dataset point id out of range");
        train.row(static_cast<Eigen::Index>(j)) = coords.row(static_cast<Eigen::Index>(dataset[j]));
    }
    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    std::vector<double> table(static_cast<std::size_t>(coords.rows()), 0.0);
    for (Eigen::Index x = 0; x < coords.rows(); ++x) {
        RandomStream rng(seed, static_cast<std::uint64_t>(x));
        double acc = 0.0;
        for (std::size_t r = 0; r < draws; ++r) {
            Vector eps(coords.cols());
            for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = rng.normal();
            const Vector xt = a * coords.row(x).transpose() + s * eps;
            const Vector score = empirical_ddpm_score_at_sigma(train, xt, s);
            // eps_hat = -sigma * score
            acc += (-s * score - eps).squaredNorm();
        }
        table[static_cast<std::size_t>(x)] = acc / static_cast<double>(draws);
    }
    return table;
}

}  // namespace memdiff
