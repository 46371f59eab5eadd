#pragma once

// Deterministic reverse process for the VP forward corruption. The
// probability-flow ODE is
//
//     dx/dt = -(sigma sigma' / (1 - sigma^2)) (x + grad log p_t(x)),
//
// which in the coordinates y = x / alpha_e, lambda = sigma_e / alpha_e reads
// dy/dlambda = -sigma_e * score. Here (alpha_e, sigma_e) are the coefficients
// of the forward map from the field's reference level (t_n for ambient
// fields, 0 otherwise). Heun steps are taken in lambda; a step ending at the
// reference level itself is a single Euler step, which lands exactly on the
// denoiser output.
//
// Grid times are spaced uniformly in lambda^(1/rho) with rho = 7.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/sample_set.hpp"
#include "memdiff/schedule.hpp"
#include "memdiff/scores.hpp"

namespace memdiff {

struct TrajectoryRecord {
    std::vector<double> times;                ///< full integration grid, t_max first
    std::vector<std::size_t> snapshot_steps;  ///< grid indices of recorded states
    std::vector<Points> states;               ///< aligned with snapshot_steps
    Points final;
    std::uint64_t seed = 0;

    static constexpr std::size_t kMaxSnapshots = 64;
};

/// Drift of the probability-flow ODE in the original time variable.
inline Vector probability_flow_drift(const ScoreField& field, const VecRef& x, double t) {
    const auto& sched = field.schedule();
    const double s = sched.sigma(t);
    const double rate = s * sched.dsigma_dt(t) / ((1.0 - s) * (1.0 + s));
    return -rate * (x + field.score(x, t));
}

namespace detail {

struct EffectiveLevel {
    double alpha;
    double sigma;
};

inline EffectiveLevel effective_level(const NoiseSchedule& sched, double t, double t_ref) {
    const double st = sched.sigma(t);
    const double sr = sched.sigma(t_ref);
    const double keep = (1.0 - sr) * (1.0 + sr);
    return {std::sqrt((1.0 - st) * (1.0 + st) / keep),
            std::sqrt(std::max(0.0, (st - sr) * (st + sr)) / keep)};
}

}  // namespace detail

inline constexpr double kGridRho = 7.0;

/// Integration times from t_max down to stop_t, uniform in lambda^(1/rho)
/// with lambda = sigma_e / alpha_e relative to the reference level t_ref.
/// When stop_t is the reference level itself (lambda = 0), the spaced part
/// ends at the level whose lambda equals that of t_min under the plain
/// schedule, and one final step reaches stop_t.
inline std::vector<double> sampling_grid(const NoiseSchedule& sched, std::size_t steps, double stop_t,
                                         double t_ref, double rho = kGridRho) {
    detail::require(steps >= 1, "sampler needs at least one step");
    detail::require(stop_t >= t_ref && stop_t < sched.t_max(), "stop time outside [t_ref, t_max)");
    detail::require(rho >= 1.0, "grid exponent must be at least 1");
    const double sr = sched.sigma(t_ref);
    const double keep = (1.0 - sr) * (1.0 + sr);
    const auto lambda_at = [&](double t) {
        const auto e = detail::effective_level(sched, t, t_ref);
        return e.sigma / e.alpha;
    };
    // Inverse of lambda_at: sigma_e^2 = l^2 / (1 + l^2), sigma_t^2 = sr^2 + sigma_e^2 keep.
    const auto time_at_lambda = [&](double l) {
        const double se2 = l * l / (1.0 + l * l);
        return sched.time_at_sigma(std::min(std::sqrt(sr * sr + se2 * keep), sched.sigma_max()));
    };
    const bool to_reference = stop_t == t_ref;
    const std::size_t spaced = to_reference ? steps - 1 : steps;
    std::vector<double> grid(steps + 1);
    grid.front() = sched.t_max();
    grid.back() = stop_t;
    if (spaced > 0) {
        const double l_min = to_reference ? sched.sigma(sched.t_min()) / sched.alpha(sched.t_min()) : lambda_at(stop_t);
        const double hi = std::pow(lambda_at(sched.t_max()), 1.0 / rho);
        const double lo = std::pow(l_min, 1.0 / rho);
        for (std::size_t i = 1; i < spaced; ++i) {
            grid[i] = time_at_lambda(std::pow(hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(spaced), rho));
        }
        if (to_reference) grid[spaced] = time_at_lambda(l_min);
    }
    for (std::size_t i = 1; i <= steps; ++i) {
        if (!(grid[i] < grid[i - 1])) throw DomainError("sampling grid is not strictly decreasing; use fewer steps");
    }
    return grid;
}

/// Standard-normal initial states; row i comes from stream i of `seed`.
inline Points initial_noise(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Points x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        RandomStream rng(seed, static_cast<std::uint64_t>(i));
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
    }
    return x;
}

/// Integrate from `start` at t_max down to stop_t.
inline TrajectoryRecord integrate_reverse(const ScoreField& field, Points start, std::size_t steps,
                                          double stop_t, bool record) {
    const auto& sched = field.schedule();
    detail::require(steps >= 1, "sampler needs at least one step");
    detail::require(start.cols() == field.dim(), "initial states have the wrong dimension");
    const double t_ref = field.reference_time();
    const bool stops_at_reference = field.variant() == ScoreVariant::empirical_ambient && stop_t == t_ref;
    detail::require(stop_t < sched.t_max(), "stop time must be below t_max");
    detail::require(stop_t >= sched.t_min() || stops_at_reference, "stop time must be at least t_min");
    detail::require(stop_t >= t_ref, "stop time must not pass the field's reference level");

    TrajectoryRecord rec;
    rec.times = sampling_grid(sched, steps, stop_t, t_ref);
    const std::size_t stride = (steps + TrajectoryRecord::kMaxSnapshots - 2) / (TrajectoryRecord::kMaxSnapshots - 1);
    auto snapshot = [&](std::size_t i, const Points& x) {
        if (record && (i % stride == 0 || i == steps)) {
            rec.snapshot_steps.push_back(i);
            rec.states.push_back(x);
        }
    };

    Points x = std::move(start);
    snapshot(0, x);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t0 = rec.times[i];
        const double t1 = rec.times[i + 1];
        const auto e0 = detail::effective_level(sched, t0, t_ref);
        const auto e1 = detail::effective_level(sched, t1, t_ref);
        const double dlambda = e1.sigma / e1.alpha - e0.sigma / e0.alpha;

        const Points y0 = x / e0.alpha;
        const Points k1 = -e0.sigma * field.score_batch(x, t0);
        if (e1.sigma == 0.0) {
            x = e1.alpha * (y0 + dlambda * k1);
        } else {
            const Points y_pred = y0 + dlambda * k1;
            const Points k2 = -e1.sigma * field.score_batch(e1.alpha * y_pred, t1);
            x = e1.alpha * (y0 + 0.5 * dlambda * (k1 + k2));
        }
        if (!x.allFinite()) throw IntegrationDiverged(i, "reverse ODE produced a non-finite state");
        snapshot(i + 1, x);
    }
    rec.final = std::move(x);
    return rec;
}

/// n trajectories started from N(0, I) at t_max.
inline TrajectoryRecord reverse_ode_sample(const ScoreField& field, Eigen::Index n, std::size_t steps,
                                           double stop_t, std::uint64_t seed, bool record = false) {
    detail::require(n >= 1, "sampler needs at least one trajectory");
    detail::require(steps >= 1, "sampler needs at least one step");
    auto rec = integrate_reverse(field, initial_noise(n, field.dim(), seed), steps, stop_t, record);
    rec.seed = seed;
    return rec;
}

}  // namespace memdiff
