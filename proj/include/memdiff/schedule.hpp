#pragma once

// Variance-preserving noise schedule: X_t = alpha(t) X_0 + sigma(t) Z with
// alpha(t) = sqrt(1 - sigma(t)^2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "memdiff/errors.hpp"

namespace memdiff {

enum class ScheduleKind { linear, tabulated };

inline std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::linear ? "linear" : "tabulated";
}

/// Coefficients moving a sample from level t_n to level t > t_n:
/// x_t = scale * x_tn + noise_std * eps.
struct BridgeCoeffs {
    double scale;
    double noise_std;
};

class NoiseSchedule {
public:
    static constexpr double kTMax = 1.0;

    /// sigma(t) = sigma_max * t.
    static NoiseSchedule linear(double sigma_max = 0.995, double t_min = 1e-3) {
        detail::require(sigma_max > 0.0 && sigma_max < 1.0, "sigma_max must lie in (0, 1)");
        detail::require(t_min > 0.0 && t_min < kTMax, "t_min must lie in (0, t_max)");
        NoiseSchedule s;
        s.kind_ = ScheduleKind::linear;
        s.sigma_max_ = sigma_max;
        s.t_min_ = t_min;
        return s;
    }

    /// Piecewise-linear interpolation of (time, sigma) knots. Knots must start
    /// at (0, 0), end at t = 1, and be strictly increasing in both coordinates.
    static NoiseSchedule tabulated(std::vector<double> times, std::vector<double> sigmas,
                                   double t_min = 1e-3) {
        detail::require(times.size() == sigmas.size() && times.size() >= 2,
                        "tabulated schedule needs at least two matching knots");
        detail::require(times.front() == 0.0 && sigmas.front() == 0.0,
                        "tabulated schedule must start at (0, 0)");
        detail::require(times.back() == kTMax, "tabulated schedule must end at t = 1");
        for (std::size_t i = 1; i < times.size(); ++i) {
            detail::require(times[i] > times[i - 1] && sigmas[i] > sigmas[i - 1],
                            "tabulated knots must be strictly increasing");
        }
        detail::require(sigmas.back() < 1.0, "sigma(t_max) must be below 1");
        detail::require(t_min > 0.0 && t_min < kTMax, "t_min must lie in (0, t_max)");
        NoiseSchedule s;
        s.kind_ = ScheduleKind::tabulated;
        s.sigma_max_ = sigmas.back();
        s.t_min_ = t_min;
        s.times_ = std::move(times);
        s.sigmas_ = std::move(sigmas);
        return s;
    }

    ScheduleKind kind() const noexcept { return kind_; }
    double sigma_max() const noexcept { return sigma_max_; }
    double t_min() const noexcept { return t_min_; }
    double t_max() const noexcept { return kTMax; }
    const std::vector<double>& knot_times() const noexcept { return times_; }
    const std::vector<double>& knot_sigmas() const noexcept { return sigmas_; }

    double sigma(double t) const {
        check_time(t);
        if (kind_ == ScheduleKind::linear) return sigma_max_ * t;
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t hi = std::min<std::size_t>(it - times_.begin(), times_.size() - 1);
        const std::size_t lo = hi - 1;
        const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
        return sigmas_[lo] + w * (sigmas_[hi] - sigmas_[lo]);
    }

    double alpha(double t) const {
        const double s = sigma(t);
        return std::sqrt((1.0 - s) * (1.0 + s));
    }

    /// d sigma / dt; analytic for the linear rule, central differences otherwise.
    double dsigma_dt(double t) const {
        check_time(t);
        if (kind_ == ScheduleKind::linear) return sigma_max_;
        constexpr double h = 1e-6;
        const double lo = std::max(0.0, t - h);
        const double hi = std::min(kTMax, t + h);
        return (sigma(hi) - sigma(lo)) / (hi - lo);
    }

    /// Inverse of sigma(t) on [0, sigma_max].
    double time_at_sigma(double s) const {
        detail::require(s >= 0.0 && s <= sigma_max_, "noise level outside the schedule range");
        if (kind_ == ScheduleKind::linear) return std::min(kTMax, s / sigma_max_);
        const auto it = std::lower_bound(sigmas_.begin(), sigmas_.end(), s);
        if (it == sigmas_.begin()) return 0.0;
        const std::size_t hi = it - sigmas_.begin();
        const std::size_t lo = hi - 1;
        const double w = (s - sigmas_[lo]) / (sigmas_[hi] - sigmas_[lo]);
        return times_[lo] + w * (times_[hi] - times_[lo]);
    }

    BridgeCoeffs bridge_coeffs(double t, double t_n) const {
        detail::require(t >= t_n, "bridge requires t >= t_n");
        const double st = sigma(t);
        const double sn = sigma(t_n);
        const double denom = (1.0 - sn) * (1.0 + sn);
        return {std::sqrt((1.0 - st) * (1.0 + st) / denom),
                std::sqrt(std::max(0.0, (st - sn) * (st + sn)) / denom)};
    }

    /// Uniform grid from t_max down to t_min with `steps` intervals.
    std::vector<double> time_grid(std::size_t steps) const { return time_grid(steps, t_min_); }

    /// Uniform grid from t_max down to stop_t with `steps` intervals.
    std::vector<double> time_grid(std::size_t steps, double stop_t) const {
        detail::require(steps >= 1, "time grid needs at least one step");
        detail::require(stop_t >= 0.0 && stop_t < kTMax, "stop time must lie in [0, t_max)");
        std::vector<double> grid(steps + 1);
        const double span = kTMax - stop_t;
        for (std::size_t i = 0; i <= steps; ++i) {
            grid[i] = kTMax - span * static_cast<double>(i) / static_cast<double>(steps);
        }
        grid.front() = kTMax;
        grid.back() = stop_t;
        return grid;
    }

private:
    NoiseSchedule() = default;

    void check_time(double t) const {
        if (!(t >= 0.0 && t <= kTMax)) {
            throw DomainError("time " + std::to_string(t) + " outside [0, t_max]");
        }
    }

    ScheduleKind kind_ = ScheduleKind::linear;
    double sigma_max_ = 0.995;
    double t_min_ = 1e-3;
    std::vector<double> times_;
    std::vector<double> sigmas_;
};

}  // namespace memdiff
