#pragma once

// Small fully connected denoiser h(x, sigma) with hand-written backprop.
//
//   u  = [x, fourier(sigma)]
//   a1 = silu(W1 u + b1),  a2 = silu(W2 a1 + b2),  F = W3 a2 + b3
//   h  = sqrt(1 - sigma^2) x + sigma F
//
// The skip term is the posterior mean for unit-variance Gaussian data, so the
// network only has to learn the residual.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

struct NetArchitecture {
    static constexpr std::uint32_t kSiLU = 1;

    std::uint32_t data_dim = 2;
    std::uint32_t fourier_frequencies = 8;
    std::uint32_t hidden_width = 128;
    std::uint32_t hidden_layers = 2;
    std::uint32_t activation = kSiLU;

    std::uint32_t embedding_width() const noexcept { return 2 * fourier_frequencies; }
    std::uint32_t input_width() const noexcept { return data_dim + embedding_width(); }

    std::size_t parameter_count() const noexcept {
        const std::size_t w = hidden_width;
        return w * input_width() + w + w * w + w + data_dim * w + data_dim;
    }

    bool operator==(const NetArchitecture&) const = default;
};

class DenoiserNet {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMatMap = Eigen::Map<const RowMat>;
    using MatMap = Eigen::Map<RowMat>;
    using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;

public:
    /// Activations kept from a forward pass for the backward pass.
    struct Cache {
        RowMat input;
        RowMat z1, a1, z2, a2;
        Eigen::VectorXd sigmas;
    };

    /// LeCun-normal weights drawn from `seed`, zero biases.
    DenoiserNet(NetArchitecture arch, std::uint64_t seed) : arch_(arch) {
        validate_arch();
        params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch_.parameter_count()));
        const auto l = layout();
        const std::array<std::pair<std::size_t, std::size_t>, 3> layers{
            std::pair{l.w1, std::size_t{arch_.input_width()}},
            std::pair{l.w2, std::size_t{arch_.hidden_width}},
            std::pair{l.w3, std::size_t{arch_.hidden_width}}};
        const std::array<std::size_t, 3> rows{arch_.hidden_width, arch_.hidden_width, arch_.data_dim};
        for (std::size_t k = 0; k < layers.size(); ++k) {
            RandomStream rng(seed, k);
            const auto [offset, fan_in] = layers[k];
            const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < rows[k] * fan_in; ++i) {
                params_[static_cast<Eigen::Index>(offset + i)] = stddev * rng.normal();
            }
        }
    }

    DenoiserNet(NetArchitecture arch, Eigen::VectorXd params)
        : arch_(arch), params_(std::move(params)) {
        validate_arch();
        detail::require(static_cast<std::size_t>(params_.size()) == arch_.parameter_count(),
                        "parameter vector does not match the architecture");
    }

    const NetArchitecture& architecture() const noexcept { return arch_; }
    const Eigen::VectorXd& parameters() const noexcept { return params_; }
    void set_parameters(const Eigen::VectorXd& p) {
        detail::require(p.size() == params_.size(), "parameter vector size mismatch");
        params_ = p;
    }
    std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

    /// Fourier features of the noise level.
    Eigen::VectorXd embed(double sigma) const {
        Eigen::VectorXd e(arch_.embedding_width());
        for (std::uint32_t k = 0; k < arch_.fourier_frequencies; ++k) {
            const double omega = std::numbers::pi * std::ldexp(1.0, static_cast<int>(k) - 1);
            e[2 * k] = std::sin(omega * sigma);
            e[2 * k + 1] = std::cos(omega * sigma);
        }
        return e;
    }

    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x, double sigma) const {
        Points xb = x.transpose();
        Eigen::VectorXd s(1);
        s[0] = sigma;
        return forward_batch(xb, s).row(0).transpose();
    }

    Points forward_batch(const Points& x, const Eigen::VectorXd& sigmas, Cache* cache = nullptr) const {
        detail::require(x.cols() == arch_.data_dim, "input dimension mismatch");
        detail::require(x.rows() == sigmas.size(), "one noise level per input row");
        const auto l = layout();
        const Eigen::Index b = x.rows();
        const Eigen::Index w = arch_.hidden_width;
        const Eigen::Index d = arch_.data_dim;

        RowMat u(b, arch_.input_width());
        u.leftCols(d) = x;
        for (Eigen::Index i = 0; i < b; ++i) u.row(i).tail(arch_.embedding_width()) = embed(sigmas[i]);

        RowMat z1 = (u * mat(l.w1, w, arch_.input_width()).transpose()).rowwise() +
                    vec(l.b1, w).transpose();
        RowMat a1 = silu(z1);
        RowMat z2 = (a1 * mat(l.w2, w, w).transpose()).rowwise() + vec(l.b2, w).transpose();
        RowMat a2 = silu(z2);
        RowMat f = (a2 * mat(l.w3, d, w).transpose()).rowwise() + vec(l.b3, d).transpose();

        Points h(b, d);
        for (Eigen::Index i = 0; i < b; ++i) {
            const double s = sigmas[i];
            const double a = std::sqrt((1.0 - s) * (1.0 + s));
            h.row(i) = a * x.row(i) + s * f.row(i);
        }
        if (cache != nullptr) {
            cache->input = std::move(u);
            cache->z1 = std::move(z1);
            cache->a1 = std::move(a1);
            cache->z2 = std::move(z2);
            cache->a2 = std::move(a2);
            cache->sigmas = sigmas;
        }
        return h;
    }

    /// Parameter gradient of sum_i <grad_h.row(i), h_i>, accumulated over rows
    /// by dense products in row order.
    Eigen::VectorXd backward(const Cache& cache, const Points& grad_h) const {
        const auto l = layout();
        const Eigen::Index w = arch_.hidden_width;
        const Eigen::Index d = arch_.data_dim;
        const Eigen::Index in = arch_.input_width();

        RowMat df = grad_h;
        for (Eigen::Index i = 0; i < df.rows(); ++i) df.row(i) *= cache.sigmas[i];

        Eigen::VectorXd g = Eigen::VectorXd::Zero(params_.size());
        gmat(g, l.w3, d, w).noalias() = df.transpose() * cache.a2;
        gvec(g, l.b3, d) = df.colwise().sum().transpose();

        RowMat dz2 = (df * mat(l.w3, d, w)).cwiseProduct(silu_grad(cache.z2));
        gmat(g, l.w2, w, w).noalias() = dz2.transpose() * cache.a1;
        gvec(g, l.b2, w) = dz2.colwise().sum().transpose();

        RowMat dz1 = (dz2 * mat(l.w2, w, w)).cwiseProduct(silu_grad(cache.z1));
        gmat(g, l.w1, w, in).noalias() = dz1.transpose() * cache.input;
        gvec(g, l.b1, w) = dz1.colwise().sum().transpose();
        return g;
    }

private:
    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3;
    };

    Layout layout() const noexcept {
        const std::size_t w = arch_.hidden_width;
        Layout l{};
        l.w1 = 0;
        l.b1 = l.w1 + w * arch_.input_width();
        l.w2 = l.b1 + w;
        l.b2 = l.w2 + w * w;
        l.w3 = l.b2 + w;
        l.b3 = l.w3 + arch_.data_dim * w;
        return l;
    }

    void validate_arch() const {
        detail::require(arch_.data_dim >= 1 && arch_.hidden_width >= 1,
                        "network widths must be positive");
        detail::require(arch_.hidden_layers == 2, "only two hidden layers are supported");
        detail::require(arch_.activation == NetArchitecture::kSiLU, "unknown activation code");
    }

    ConstMatMap mat(std::size_t offset, Eigen::Index rows, Eigen::Index cols) const {
        return ConstMatMap(params_.data() + offset, rows, cols);
    }
    ConstVecMap vec(std::size_t offset, Eigen::Index n) const {
        return ConstVecMap(params_.data() + offset, n);
    }
    static MatMap gmat(Eigen::VectorXd& g, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
        return MatMap(g.data() + offset, rows, cols);
    }
    static VecMap gvec(Eigen::VectorXd& g, std::size_t offset, Eigen::Index n) {
        return VecMap(g.data() + offset, n);
    }

    static RowMat silu(const RowMat& z) {
        return z.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
    }
    static RowMat silu_grad(const RowMat& z) {
        return z.unaryExpr([](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
    }

    NetArchitecture arch_;
    Eigen::VectorXd params_;
};

}  // namespace memdiff
