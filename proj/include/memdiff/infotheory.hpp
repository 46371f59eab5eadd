#pragma once

// Information carried by a noised training point about its clean source,
// for a Gaussian prior x0 ~ N(0, Sigma) and x_tn = alpha x0 + sigma z.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

struct MutualInformation {
    double mi_ambient = 0.0;  ///< I(x_tn; x0) for one noisy copy, nats
    double mi_ddpm = 0.0;     ///< m times mi_ambient
    bool regularized = false; ///< Sigma was not positive definite; 1e-12 I added
};

/// (1/2) log det(((1 - s^2) / s^2) Sigma + I) and its m-fold multiple.
inline MutualInformation mi_single_point(const Eigen::MatrixXd& sigma_matrix, double sigma_tn, std::size_t m) {
    detail::require(sigma_tn > 0.0 && sigma_tn < 1.0, "sigma_tn must lie in (0, 1)");
    detail::require(m >= 1, "m must be at least 1");
    detail::require(sigma_matrix.rows() == sigma_matrix.cols() && sigma_matrix.rows() >= 1,
                    "Sigma must be a non-empty square matrix");
    detail::require(sigma_matrix.allFinite(), "Sigma must be finite");
    detail::require((sigma_matrix - sigma_matrix.transpose()).cwiseAbs().maxCoeff() <=
                        1e-12 * std::max(1.0, sigma_matrix.cwiseAbs().maxCoeff()),
                    "Sigma must be symmetric");

    MutualInformation out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_matrix, Eigen::EigenvaluesOnly);
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    detail::require(lambda.minCoeff() >= -1e-10 * scale, "Sigma must be positive semi-definite");
    if (lambda.minCoeff() <= 0.0) {
        lambda = (lambda.array().max(0.0) + 1e-12).matrix();
        out.regularized = true;
    }
    const double snr = (1.0 - sigma_tn) * (1.0 + sigma_tn) / (sigma_tn * sigma_tn);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) logdet += std::log1p(snr * lambda[i]);
    out.mi_ambient = 0.5 * logdet;
    out.mi_ddpm = static_cast<double>(m) * out.mi_ambient;
    return out;
}

/// Upper bound m d / 2 log(1 / sigma_tn^2) on what m noisy copies reveal.
inline double mi_dataset_bound(std::size_t d, double sigma_tn, std::size_t m) {
    detail::require(sigma_tn > 0.0 && sigma_tn <= 1.0, "sigma_tn must lie in (0, 1]");
    detail::require(d >= 1 && m >= 1, "d and m must be at least 1");
    return -static_cast<double>(m * d) * std::log(sigma_tn);
}

struct MonteCarloMI {
    double estimate = 0.0;     ///< -(1/2) log(1 - rho^2), nats
    double correlation = 0.0;  ///< sample correlation of (x0, x_tn)
    std::size_t draws = 0;
};

/// d = 1, x0 ~ N(0, prior_variance). Draws are generated in fixed-size chunks,
/// one random stream per chunk, and the chunk moments are merged in order.
inline MonteCarloMI mi_monte_carlo_gaussian(double sigma_tn, std::size_t draws, std::uint64_t seed,
                                            double prior_variance = 1.0) {
    detail::require(sigma_tn >= 0.0 && sigma_tn <= 1.0, "sigma_tn must lie in [0, 1]");
    detail::require(draws >= 10000, "Monte Carlo MI needs at least 1e4 draws");
    detail::require(prior_variance > 0.0, "prior variance must be positive");
    constexpr std::size_t kChunk = 1u << 16;
    const double alpha = std::sqrt((1.0 - sigma_tn) * (1.0 + sigma_tn));
    const double sd = std::sqrt(prior_variance);

    // Running (count, means, co-moments), combined pairwise.
    double n = 0.0, mx = 0.0, my = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (std::size_t start = 0, chunk = 0; start < draws; start += kChunk, ++chunk) {
        const std::size_t len = std::min(kChunk, draws - start);
        RandomStream rng(seed, chunk);
        double bn = 0.0, bx = 0.0, by = 0.0, bxx = 0.0, byy = 0.0, bxy = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double x = sd * rng.normal();
            const double y = alpha * x + sigma_tn * rng.normal();
            bn += 1.0;
            const double dx = x - bx;
            const double dy = y - by;
            bx += dx / bn;
            by += dy / bn;
            bxx += dx * (x - bx);
            byy += dy * (y - by);
            bxy += dx * (y - by);
        }
        const double total = n + bn;
        const double dx = bx - mx;
        const double dy = by - my;
        const double f = n * bn / total;
        cxx += bxx + dx * dx * f;
        cyy += byy + dy * dy * f;
        cxy += bxy + dx * dy * f;
        mx += dx * bn / total;
        my += dy * bn / total;
        n = total;
    }
    MonteCarloMI out;
    out.draws = draws;
    out.correlation = (cxx > 0.0 && cyy > 0.0) ? cxy / std::sqrt(cxx * cyy) : 0.0;
    out.estimate = -0.5 * std::log1p(-out.correlation * out.correlation);
    return out;
}

}  // namespace memdiff
