#pragma once

// Closed-form optimal scores for finite datasets, Tweedie conversions, and the
// ambient (noisy-data) denoising coefficients.

#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "memdiff/denoiser_net.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/sample_set.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

using VecRef = Eigen::Ref<const Vector>;

namespace detail {

// sum_i w_i (scale * y_i - x) / variance with w_i proportional to
// N(x; scale * y_i, variance * I), evaluated with the max-subtraction trick.
inline Vector isotropic_mixture_score(const Points& centers, double scale, double variance,
                                      const VecRef& x) {
    require(centers.rows() >= 1, "score of an empty sample set");
    require(centers.cols() == x.size(), "point dimension does not match the sample set");
    const Eigen::Index n = centers.rows();
    Eigen::VectorXd logw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        logw[i] = -(x.transpose() - scale * centers.row(i)).squaredNorm() / (2.0 * variance);
    }
    const double top = logw.maxCoeff();
    Vector pull = Vector::Zero(x.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = std::exp(logw[i] - top);
        total += w;
        pull += w * (scale * centers.row(i).transpose());
    }
    return (pull / total - x) / variance;
}

}  // namespace detail

/// Score of the empirical mixture (1/n) sum_i N(sqrt(1-sigma^2) x_i, sigma^2 I).
inline Vector empirical_ddpm_score_at_sigma(const Points& data, const VecRef& x, double sigma) {
    detail::require(sigma > 0.0 && sigma < 1.0, "noise level must lie in (0, 1)");
    return detail::isotropic_mixture_score(data, std::sqrt((1.0 - sigma) * (1.0 + sigma)),
                                           sigma * sigma, x);
}

inline Vector empirical_ddpm_score(const SampleSet& clean, const VecRef& x, double t,
                                   const NoiseSchedule& sched) {
    detail::require(!clean.provenance().noised, "DDPM score expects a clean sample set");
    detail::require(t >= sched.t_min() && t <= sched.t_max(), "time outside [t_min, t_max]");
    return empirical_ddpm_score_at_sigma(clean.points(), x, sched.sigma(t));
}

/// Exact score of q_t(x | S_tn), the noisy set pushed forward from t_n to t.
inline Vector empirical_ambient_score(const SampleSet& noisy, const VecRef& x, double t,
                                      const NoiseSchedule& sched) {
    detail::require(noisy.provenance().noised, "ambient score expects a noised sample set");
    const double t_n = noisy.provenance().t_n;
    detail::require(t > t_n, "ambient score requires t > t_n");
    const double st = sched.sigma(t);
    const double sn = sched.sigma(t_n);
    detail::require(st > sn, "ambient score requires sigma(t) > sigma(t_n)");
    const double keep = (1.0 - sn) * (1.0 + sn);
    const double scale = std::sqrt((1.0 - st) * (1.0 + st) / keep);
    const double variance = (st - sn) * (st + sn) / keep;
    return detail::isotropic_mixture_score(noisy.points(), scale, variance, x);
}

/// Marginal at time t of N(mu, Sigma) data, with Sigma factored once.
class GaussianMarginal {
public:
    GaussianMarginal(Vector mu, const Eigen::MatrixXd& sigma) : mu_(std::move(mu)) {
        detail::require(sigma.rows() == sigma.cols() && sigma.rows() == mu_.size(),
                        "covariance must be d x d");
        const double norm = std::max(1.0, sigma.cwiseAbs().maxCoeff());
        detail::require((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * norm,
                        "covariance must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
        detail::require(eig.info() == Eigen::Success, "eigendecomposition failed");
        detail::require(eig.eigenvalues().minCoeff() > 0.0, "covariance must be positive definite");
        basis_ = eig.eigenvectors();
        spectrum_ = eig.eigenvalues();
    }

    const Vector& mean() const noexcept { return mu_; }

    Vector score(const VecRef& x, double sigma) const {
        detail::require(x.size() == mu_.size(), "point dimension mismatch");
        const double keep = (1.0 - sigma) * (1.0 + sigma);
        const Vector centered = x - std::sqrt(keep) * mu_;
        Vector coords = basis_.transpose() * centered;
        for (Eigen::Index k = 0; k < coords.size(); ++k) {
            coords[k] /= keep * spectrum_[k] + sigma * sigma;
        }
        return -(basis_ * coords);
    }

    double log_density(const VecRef& x, double sigma) const {
        const double keep = (1.0 - sigma) * (1.0 + sigma);
        const Vector coords = basis_.transpose() * (x - std::sqrt(keep) * mu_);
        double quad = 0.0;
        double logdet = 0.0;
        for (Eigen::Index k = 0; k < coords.size(); ++k) {
            const double v = keep * spectrum_[k] + sigma * sigma;
            quad += coords[k] * coords[k] / v;
            logdet += std::log(v);
        }
        return -0.5 * (quad + logdet + static_cast<double>(coords.size()) * std::log(2.0 * std::numbers::pi));
    }

private:
    Vector mu_;
    Eigen::MatrixXd basis_;
    Vector spectrum_;
};

inline Vector analytic_gaussian_score(const Vector& mu, const Eigen::MatrixXd& sigma_matrix,
                                      const VecRef& x, double t, const NoiseSchedule& sched) {
    return GaussianMarginal(mu, sigma_matrix).score(x, sched.sigma(t));
}

/// Tweedie: score = (alpha h - x) / sigma^2.
inline Vector denoiser_to_score(const VecRef& h, const VecRef& x, double t,
                                const NoiseSchedule& sched) {
    detail::require(t >= sched.t_min(), "Tweedie conversion needs t >= t_min");
    const double s = sched.sigma(t);
    return (sched.alpha(t) * h - x) / (s * s);
}

inline Vector score_to_denoiser(const VecRef& score, const VecRef& x, double t,
                                const NoiseSchedule& sched) {
    detail::require(t >= sched.t_min(), "Tweedie conversion needs t >= t_min");
    const double s = sched.sigma(t);
    return (x + s * s * score) / sched.alpha(t);
}

/// (a, b) with a E[x0 | x_t] + b x_t = E[x_tn | x_t].
struct AmbientCoeffs {
    double a;
    double b;
};

inline AmbientCoeffs ambient_denoiser_coeffs(double t, double t_n, const NoiseSchedule& sched) {
    detail::require(t > t_n, "ambient coefficients require t > t_n");
    const double st = sched.sigma(t);
    const double sn = sched.sigma(t_n);
    const double keep_n = (1.0 - sn) * (1.0 + sn);
    const double keep_t = (1.0 - st) * (1.0 + st);
    return {(st - sn) * (st + sn) / (st * st * std::sqrt(keep_n)),
            (sn * sn) / (st * st) * std::sqrt(keep_t / keep_n)};
}

/// v-prediction target for a sample noised from x_tn to x_t with fresh noise z.
/// Uses the general (alpha, sigma) transition form sigma_{t|s}^2 =
/// (1 - alpha_t^2 sigma_s^2 / (sigma_t^2 alpha_s^2)) sigma_t^2.
inline Vector v_prediction_target(const VecRef& x_tn, const VecRef& x_t, const VecRef& z, double t,
                                  double t_n, const NoiseSchedule& sched) {
    detail::require(t > t_n, "v-prediction target requires t > t_n");
    const double at = sched.alpha(t);
    const double st = sched.sigma(t);
    const double an = sched.alpha(t_n);
    const double sn = sched.sigma(t_n);
    const double bridge_var = (1.0 - (at * at * sn * sn) / (st * st * an * an)) * st * st;
    const double a = an * bridge_var / (st * st);
    const double b = at * sn * sn / (st * st * an);
    return at * z - st * (x_tn - b * x_t) / a;
}

/// x0 estimate from a v prediction: alpha x_t - sigma v.
inline Vector v_to_denoiser(const VecRef& v, const VecRef& x_t, double t, const NoiseSchedule& sched) {
    return sched.alpha(t) * x_t - sched.sigma(t) * v;
}

/// v corresponding to a denoiser output: alpha E[z|x_t] - sigma h.
inline Vector denoiser_to_v(const VecRef& h, const VecRef& x_t, double t, const NoiseSchedule& sched) {
    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    return a * (x_t - a * h) / s - s * h;
}

enum class ScoreVariant { empirical_ddpm, empirical_ambient, analytic_gaussian, learned };

/// Evaluable score s(x, t). Immutable after construction.
class ScoreField {
    struct Empirical {
        SampleSet data;
    };
    struct Ambient {
        SampleSet noisy;
    };
    struct Gaussian {
        std::shared_ptr<const GaussianMarginal> marginal;
    };
    struct Learned {
        std::shared_ptr<const DenoiserNet> net;
    };

public:
    static ScoreField empirical_ddpm(SampleSet clean, NoiseSchedule sched) {
        detail::require(!clean.provenance().noised, "DDPM field expects a clean sample set");
        const auto d = clean.dim();
        return ScoreField(Empirical{std::move(clean)}, std::move(sched), d);
    }
    static ScoreField empirical_ambient(SampleSet noisy, NoiseSchedule sched) {
        detail::require(noisy.provenance().noised, "ambient field expects a noised sample set");
        const auto d = noisy.dim();
        return ScoreField(Ambient{std::move(noisy)}, std::move(sched), d);
    }
    static ScoreField analytic_gaussian(Vector mu, const Eigen::MatrixXd& sigma, NoiseSchedule sched) {
        const auto d = mu.size();
        return ScoreField(Gaussian{std::make_shared<const GaussianMarginal>(std::move(mu), sigma)},
                          std::move(sched), d);
    }
    static ScoreField learned(std::shared_ptr<const DenoiserNet> net, NoiseSchedule sched) {
        detail::require(net != nullptr, "learned field needs a network");
        const Eigen::Index d = net->architecture().data_dim;
        return ScoreField(Learned{std::move(net)}, std::move(sched), d);
    }

    ScoreVariant variant() const noexcept { return static_cast<ScoreVariant>(backing_.index()); }
    const NoiseSchedule& schedule() const noexcept { return sched_; }
    Eigen::Index dim() const noexcept { return dim_; }

    /// Level of the data the field reproduces: t_n for ambient fields, else 0.
    double reference_time() const noexcept {
        if (const auto* amb = std::get_if<Ambient>(&backing_)) return amb->noisy.provenance().t_n;
        return 0.0;
    }

    /// Points the field is built on, when it is empirical.
    const SampleSet* support() const noexcept {
        if (const auto* e = std::get_if<Empirical>(&backing_)) return &e->data;
        if (const auto* a = std::get_if<Ambient>(&backing_)) return &a->noisy;
        return nullptr;
    }

    Vector score(const VecRef& x, double t) const {
        check_time(t);
        return std::visit(
            [&](const auto& b) -> Vector {
                using T = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<T, Empirical>) {
                    return empirical_ddpm_score_at_sigma(b.data.points(), x, sched_.sigma(t));
                } else if constexpr (std::is_same_v<T, Ambient>) {
                    return empirical_ambient_score(b.noisy, x, t, sched_);
                } else if constexpr (std::is_same_v<T, Gaussian>) {
                    return b.marginal->score(x, sched_.sigma(t));
                } else {
                    return denoiser_to_score(b.net->forward(x, sched_.sigma(t)), x, t, sched_);
                }
            },
            backing_);
    }

    /// Row-wise evaluation; each row uses the same summation order as score().
    Points score_batch(const Points& x, double t) const {
        check_time(t);
        detail::require(x.cols() == dim_, "point dimension mismatch");
        if (const auto* l = std::get_if<Learned>(&backing_)) {
            const double s = sched_.sigma(t);
            const Points h = l->net->forward_batch(x, Vector::Constant(x.rows(), s));
            return (sched_.alpha(t) * h - x) / (s * s);
        }
        Points out(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            out.row(i) = score(x.row(i).transpose(), t).transpose();
        }
        return out;
    }

private:
    using Backing = std::variant<Empirical, Ambient, Gaussian, Learned>;

    ScoreField(Backing backing, NoiseSchedule sched, Eigen::Index dim)
        : backing_(std::move(backing)), sched_(std::move(sched)), dim_(dim) {}

    void check_time(double t) const {
        if (!(t >= sched_.t_min() && t <= sched_.t_max())) {
            throw DomainError("score evaluated outside [t_min, t_max]");
        }
        if (variant() == ScoreVariant::empirical_ambient && !(t > reference_time())) {
            throw DomainError("ambient score evaluated at t <= t_n");
        }
    }

    Backing backing_;
    NoiseSchedule sched_;
    Eigen::Index dim_;
};

}  // namespace memdiff
