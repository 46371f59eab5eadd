#pragma once

// Raw-coordinate stand-ins for the image metrics: nearest-neighbour
// memorization, Gaussian Frechet distance, and exact empirical W2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "memdiff/assignment.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

struct MemorizationReport {
    std::vector<std::size_t> nearest;  ///< index of the nearest training point
    std::vector<double> distance;      ///< Euclidean distance to it
    std::vector<double> similarity;    ///< cosine similarity to it
    std::vector<double> similarity_thresholds;
    std::vector<double> fraction_similarity_at_least;  ///< per similarity threshold
    std::vector<double> distance_thresholds;
    std::vector<double> fraction_distance_below;  ///< per distance threshold
    double mean_similarity = 0.0;
    double similarity_p95 = 0.0;
};

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
inline double percentile(std::vector<double> values, double q) {
    detail::require(!values.empty(), "percentile of an empty list");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                                const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return (a - b).squaredNorm() == 0.0 ? 1.0 : 0.0;
    return a.dot(b) / (na * nb);
}

/// For each generated point, its nearest training point (lowest index on ties),
/// plus threshold fractions.
inline MemorizationReport nn_similarity(const SampleSet& generated, const SampleSet& train,
                                        std::vector<double> similarity_thresholds,
                                        std::vector<double> distance_thresholds = {}) {
    detail::require(generated.dim() == train.dim(), "generated and training sets differ in dimension");
    std::sort(similarity_thresholds.begin(), similarity_thresholds.end());
    std::sort(distance_thresholds.begin(), distance_thresholds.end());
    MemorizationReport rep;
    const auto m = static_cast<std::size_t>(generated.size());
    rep.nearest.resize(m);
    rep.distance.resize(m);
    rep.similarity.resize(m);
    for (std::size_t g = 0; g < m; ++g) {
        const auto x = generated.row(static_cast<Eigen::Index>(g));
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (Eigen::Index i = 0; i < train.size(); ++i) {
            const double d2 = (x - train.row(i)).squaredNorm();
            if (d2 < best) {
                best = d2;
                arg = static_cast<std::size_t>(i);
            }
        }
        rep.nearest[g] = arg;
        rep.distance[g] = std::sqrt(best);
        rep.similarity[g] = cosine_similarity(x, train.row(static_cast<Eigen::Index>(arg)));
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (double th : similarity_thresholds) {
        const auto c = std::count_if(rep.similarity.begin(), rep.similarity.end(), [&](double s) { return s >= th; });
        rep.fraction_similarity_at_least.push_back(static_cast<double>(c) * inv_m);
    }
    for (double th : distance_thresholds) {
        const auto c = std::count_if(rep.distance.begin(), rep.distance.end(), [&](double d) { return d < th; });
        rep.fraction_distance_below.push_back(static_cast<double>(c) * inv_m);
    }
    rep.similarity_thresholds = std::move(similarity_thresholds);
    rep.distance_thresholds = std::move(distance_thresholds);
    double sum = 0.0;
    for (double s : rep.similarity) sum += s;
    rep.mean_similarity = sum * inv_m;
    rep.similarity_p95 = percentile(rep.similarity, 95.0);
    return rep;
}

/// Fraction of generated points strictly closer than `delta` to a training point.
inline double memorization_fraction(const SampleSet& generated, const SampleSet& train, double delta) {
    return nn_similarity(generated, train, {}, {delta}).fraction_distance_below.front();
}

struct FrechetResult {
    double value = 0.0;
    bool regularized = false;  ///< 1e-6 I was added to a singular covariance
};

namespace detail {

inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline Eigen::MatrixXd sample_covariance(const Points& x, const Eigen::RowVectorXd& mean) {
    const Points c = x.rowwise() - mean;
    return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2) from sample moments.
inline FrechetResult gaussian_frechet(const SampleSet& a, const SampleSet& b) {
    detail::require(a.dim() == b.dim(), "sets differ in dimension");
    detail::require(a.size() > a.dim() && b.size() > b.dim(), "Frechet distance needs n > d");
    const Eigen::RowVectorXd ma = a.points().colwise().mean();
    const Eigen::RowVectorXd mb = b.points().colwise().mean();
    Eigen::MatrixXd sa = detail::sample_covariance(a.points(), ma);
    Eigen::MatrixXd sb = detail::sample_covariance(b.points(), mb);

    FrechetResult res;
    const auto singular = [](const Eigen::MatrixXd& s) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
        return eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
    };
    const Eigen::MatrixXd ridge = 1e-6 * Eigen::MatrixXd::Identity(a.dim(), a.dim());
    if (singular(sa)) {
        sa += ridge;
        res.regularized = true;
    }
    if (singular(sb)) {
        sb += ridge;
        res.regularized = true;
    }
    const Eigen::MatrixXd ra = detail::sqrt_psd(sa);
    const Eigen::MatrixXd cross = detail::sqrt_psd(ra * sb * ra);
    res.value = (ma - mb).squaredNorm() + (sa + sb - 2.0 * cross).trace();
    return res;
}

/// Exact empirical 2-Wasserstein distance between equal-size point sets.
inline double exact_w2(const SampleSet& a, const SampleSet& b) {
    detail::require(a.size() == b.size(), "W2 needs equal set sizes");
    detail::require(a.dim() == b.dim(), "sets differ in dimension");
    detail::require(a.size() <= 4096, "W2 supports at most 4096 points");
    const Eigen::Index n = a.size();
    Points cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
    const auto match = solve_assignment(cost);
    return std::sqrt(std::max(0.0, match.cost / static_cast<double>(n)));
}

struct ParetoEntry {
    double sigma_tn = 0.0;
    double quality = 0.0;       ///< distance to the data distribution (lower is better)
    double memorization = 0.0;  ///< memorized fraction (lower is better)
    bool on_frontier = false;
};

/// Marks entries not strictly dominated in (quality, memorization); rows are
/// returned sorted by sigma_tn. Identical entries are all kept.
inline std::vector<ParetoEntry> pareto_sweep(std::vector<ParetoEntry> entries) {
    detail::require(entries.size() >= 2, "Pareto sweep needs at least two entries");
    for (auto& e : entries) {
        e.on_frontier = std::none_of(entries.begin(), entries.end(), [&](const ParetoEntry& o) {
            return o.quality <= e.quality && o.memorization <= e.memorization &&
                   (o.quality < e.quality || o.memorization < e.memorization);
        });
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ParetoEntry& l, const ParetoEntry& r) { return l.sigma_tn < r.sigma_tn; });
    return entries;
}

}  // namespace memdiff
