#pragma once

// Total variation between identity-covariance Gaussians and how it contracts
// under the VP forward process.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

/// TV(N(mu1, I), N(mu2, I)) = 2 Phi(|mu1 - mu2| / 2) - 1 = erf(|mu1 - mu2| / (2 sqrt 2)).
inline double tv_identity_gaussians(const Eigen::Ref<const Eigen::VectorXd>& mu1,
                                    const Eigen::Ref<const Eigen::VectorXd>& mu2) {
    detail::require(mu1.size() == mu2.size(), "means differ in dimension");
    return std::erf((mu1 - mu2).norm() / (2.0 * std::numbers::sqrt2));
}

/// TV between the two components after forward noising to level sigma_t.
inline double tv_at_noise(const Eigen::Ref<const Eigen::VectorXd>& mu1, const Eigen::Ref<const Eigen::VectorXd>& mu2,
                          double sigma_t) {
    detail::require(sigma_t >= 0.0 && sigma_t < 1.0, "sigma_t must lie in [0, 1)");
    const double alpha = std::sqrt((1.0 - sigma_t) * (1.0 + sigma_t));
    detail::require(mu1.size() == mu2.size(), "means differ in dimension");
    return std::erf(alpha * (mu1 - mu2).norm() / (2.0 * std::numbers::sqrt2));
}

enum class ClusterStatus { separated, merged, neither };

inline std::string to_string(ClusterStatus s) {
    switch (s) {
        case ClusterStatus::separated: return "separated";
        case ClusterStatus::merged: return "merged";
        case ClusterStatus::neither: return "neither";
    }
    return "?";
}

/// separated iff TV > 2 eps, merged iff TV <= eps.
inline ClusterStatus cluster_status(double tv, double epsilon) {
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    if (tv <= epsilon) return ClusterStatus::merged;
    if (tv > 2.0 * epsilon) return ClusterStatus::separated;
    return ClusterStatus::neither;
}

inline ClusterStatus merge_and_separation_status(const Eigen::Ref<const Eigen::VectorXd>& mu1,
                                                 const Eigen::Ref<const Eigen::VectorXd>& mu2, double sigma_t,
                                                 double epsilon) {
    return cluster_status(tv_at_noise(mu1, mu2, sigma_t), epsilon);
}

/// Smallest sigma_t from which TV <= |dmu_t| / sqrt 2 certifies an eps-merge:
/// sqrt(1 - 2 (eps / |dmu|)^2), or 0 when every level qualifies.
inline double merge_threshold_sigma(double mean_distance, double epsilon) {
    detail::require(mean_distance >= 0.0, "mean distance must be non-negative");
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    if (mean_distance == 0.0) return 0.0;
    const double r = epsilon / mean_distance;
    return std::sqrt(std::max(0.0, 1.0 - 2.0 * r * r));
}

/// Largest sigma_t at which TV >= |dmu_t| / 200 certifies eps-separation:
/// sqrt(1 - (400 eps / |dmu|)^2). Returns a negative value when no level does,
/// which includes eps >= 1/2 since TV > 2 eps is then impossible.
inline double separation_threshold_sigma(double mean_distance, double epsilon) {
    detail::require(mean_distance >= 0.0, "mean distance must be non-negative");
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    if (mean_distance == 0.0 || epsilon >= 0.5) return -1.0;
    const double r = 400.0 * epsilon / mean_distance;
    return r <= 1.0 ? std::sqrt(1.0 - r * r) : -1.0;
}

struct SingleRepCheck {
    bool within = true;       ///< every pairwise distance <= eps_target
    double max_distance = 0.0;
};

/// m forward-noised copies of x0 at level sigma_t; copy i uses stream i of `seed`.
inline SingleRepCheck smoothed_single_rep_check(const Eigen::Ref<const Eigen::VectorXd>& x0, std::size_t m,
                                                double sigma_t, double eps_target, std::uint64_t seed) {
    detail::require(sigma_t >= 0.0 && sigma_t < 1.0, "sigma_t must lie in [0, 1)");
    detail::require(m >= 1, "m must be at least 1");
    detail::require(eps_target >= 0.0, "eps_target must be non-negative");
    const double alpha = std::sqrt((1.0 - sigma_t) * (1.0 + sigma_t));
    const Eigen::Index d = x0.size();
    Eigen::MatrixXd copies(d, static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        RandomStream rng(seed, i);
        for (Eigen::Index j = 0; j < d; ++j) copies(j, static_cast<Eigen::Index>(i)) = alpha * x0[j] + sigma_t * rng.normal();
    }
    SingleRepCheck out;
    for (Eigen::Index a = 0; a < copies.cols(); ++a) {
        for (Eigen::Index b = a + 1; b < copies.cols(); ++b) {
            out.max_distance = std::max(out.max_distance, (copies.col(a) - copies.col(b)).norm());
        }
    }
    out.within = out.max_distance <= eps_target;
    return out;
}

}  // namespace memdiff
