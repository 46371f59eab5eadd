#pragma once

// Built-in toy data: an isotropic Gaussian mixture with equal weights and
// centers evenly spaced on a circle.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

struct RingMixture {
    std::size_t components = 8;
    double radius = 2.0;
    double stddev = 0.2;

    void validate() const {
        detail::require(components >= 1, "mixture needs at least one component");
        detail::require(radius >= 0.0 && std::isfinite(radius), "radius must be finite and non-negative");
        detail::require(stddev > 0.0 && std::isfinite(stddev), "stddev must be positive");
    }

    Eigen::RowVector2d center(std::size_t k) const {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(components);
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    /// Row i draws its component and offset from stream i of `seed`.
    Points sample(Eigen::Index n, std::uint64_t seed) const {
        validate();
        detail::require(n >= 1, "need at least one sample");
        Points x(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            RandomStream rng(seed, static_cast<std::uint64_t>(i));
            const auto c = center(static_cast<std::size_t>(rng.below(components)));
            x(i, 0) = c[0] + stddev * rng.normal();
            x(i, 1) = c[1] + stddev * rng.normal();
        }
        return x;
    }
};

}  // namespace memdiff
