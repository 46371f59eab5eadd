#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

/// n x d matrix, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Where a SampleSet came from. A noised set remembers the level and seed so
/// that it can be regenerated bit-for-bit.
struct Provenance {
    bool noised = false;
    double t_n = 0.0;
    std::uint64_t seed = 0;

    static Provenance clean() { return {}; }
    static Provenance noised_at(double t_n, std::uint64_t seed) { return {true, t_n, seed}; }
};

class SampleSet {
public:
    explicit SampleSet(Points points, Provenance provenance = Provenance::clean())
        : points_(std::move(points)), provenance_(provenance) {
        detail::require(points_.rows() >= 1 && points_.cols() >= 1,
                        "sample set needs n >= 1 and d >= 1");
        detail::require(points_.allFinite(), "sample set coordinates must be finite");
    }

    const Points& points() const noexcept { return points_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    Eigen::Index size() const noexcept { return points_.rows(); }
    Eigen::Index dim() const noexcept { return points_.cols(); }
    auto row(Eigen::Index i) const { return points_.row(i); }

    /// Largest point norm, floored at 1 for a set concentrated at the origin.
    double data_scale() const {
        const double m = points_.rowwise().norm().maxCoeff();
        return m > 0.0 ? m : 1.0;
    }

private:
    Points points_;
    Provenance provenance_;
};

/// One noisy copy per point: alpha(t_n) x_i + sigma(t_n) eps_i, where eps_i is
/// drawn from stream i of `seed`.
inline SampleSet noise_dataset(const SampleSet& clean, const NoiseSchedule& sched, double t_n,
                               std::uint64_t seed) {
    detail::require(!clean.provenance().noised, "noise_dataset expects a clean set");
    const double a = sched.alpha(t_n);
    const double s = sched.sigma(t_n);
    Points out(clean.size(), clean.dim());
    for (Eigen::Index i = 0; i < clean.size(); ++i) {
        RandomStream rng(seed, static_cast<std::uint64_t>(i));
        for (Eigen::Index j = 0; j < clean.dim(); ++j) {
            out(i, j) = a * clean.points()(i, j) + s * rng.normal();
        }
    }
    return SampleSet(std::move(out), Provenance::noised_at(t_n, seed));
}

/// Affine map to zero mean and unit scale (a single scalar scale keeps
/// isotropic noise isotropic).
struct Normalizer {
    Vector mean;
    double scale = 1.0;

    static Normalizer fit(const Points& x) {
        Normalizer n;
        n.mean = x.colwise().mean().transpose();
        const double var = (x.rowwise() - n.mean.transpose()).squaredNorm() /
                           static_cast<double>(x.rows() * x.cols());
        n.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        return n;
    }

    static Normalizer identity(Eigen::Index dim) { return {Vector::Zero(dim), 1.0}; }

    Points apply(const Points& x) const {
        return (x.rowwise() - mean.transpose()) / scale;
    }
    Points invert(const Points& z) const {
        return (z * scale).rowwise() + mean.transpose();
    }
};

}  // namespace memdiff
