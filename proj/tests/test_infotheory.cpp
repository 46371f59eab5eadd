#include <cmath>

#include <gtest/gtest.h>

#include "memdiff/infotheory.hpp"

using namespace memdiff;

namespace {

Eigen::MatrixXd eye(int d) { return Eigen::MatrixXd::Identity(d, d); }

}  // namespace

TEST(MiSinglePoint, HalfNoiseExampleAndCorrelationIdentity) {
    const double s = std::sqrt(0.5);
    const auto mi = mi_single_point(eye(1), s, 1);
    EXPECT_NEAR(mi.mi_ambient, 0.5 * std::log(2.0), 1e-15);
    EXPECT_FALSE(mi.regularized);
    EXPECT_NEAR(mi_single_point(eye(1), s, 2).mi_ddpm, std::log(2.0), 1e-15);
    // I = -(1/2) ln(1 - rho^2), rho^2 = (1 - s^2) v / ((1 - s^2) v + s^2).
    for (double v : {0.3, 1.0, 4.0}) {
        for (double sig : {0.1, 0.5, 0.9}) {
            Eigen::MatrixXd S(1, 1);
            S << v;
            const double rho2 = (1 - sig * sig) * v / ((1 - sig * sig) * v + sig * sig);
            EXPECT_NEAR(mi_single_point(S, sig, 1).mi_ambient, -0.5 * std::log(1 - rho2), 1e-13);
        }
    }
}

TEST(MiSinglePoint, MultivariateMatchesDeterminant) {
    Eigen::MatrixXd S(3, 3);
    S << 2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.5;
    const double sig = 0.6;
    const Eigen::MatrixXd M = (1 - sig * sig) / (sig * sig) * S + eye(3);
    EXPECT_NEAR(mi_single_point(S, sig, 1).mi_ambient, 0.5 * std::log(M.determinant()), 1e-13);
}

TEST(MiSinglePoint, LimitsAndErrors) {
    EXPECT_LT(mi_single_point(eye(2), 1.0 - 1e-12, 1).mi_ambient, 1e-10);
    const auto z = mi_single_point(Eigen::MatrixXd::Zero(2, 2), 0.5, 3);
    EXPECT_TRUE(z.regularized);
    EXPECT_NEAR(z.mi_ddpm, 0.0, 1e-10);
    EXPECT_THROW(mi_single_point(eye(1), 0.0, 1), DomainError);
    EXPECT_THROW(mi_single_point(eye(1), 1.0, 1), DomainError);
    EXPECT_THROW(mi_single_point(eye(1), 0.5, 0), DomainError);
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0.5, 0.4, 1;
    EXPECT_THROW(mi_single_point(bad, 0.5, 1), DomainError);
    bad << 1, 2, 2, 1;
    EXPECT_THROW(mi_single_point(bad, 0.5, 1), DomainError);
}

TEST(MiSinglePoint, FactorMExactAndDecreasing) {
    Eigen::MatrixXd S(2, 2);
    S << 1.5, 0.2, 0.2, 0.7;
    double prev = INFINITY;
    for (int i = 1; i < 100; ++i) {
        const double sig = i / 100.0;
        for (std::size_t m : {1, 2, 5, 17}) {
            const auto mi = mi_single_point(S, sig, m);
            EXPECT_EQ(mi.mi_ddpm, static_cast<double>(m) * mi.mi_ambient);
        }
        const double cur = mi_single_point(S, sig, 1).mi_ambient;
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(MiBound, ExamplesAndDominance) {
    EXPECT_EQ(mi_dataset_bound(3, 1.0, 4), 0.0);
    EXPECT_NEAR(mi_dataset_bound(2, 0.5, 3), 3 * std::log(4.0), 1e-14);
    EXPECT_THROW(mi_dataset_bound(2, 0.0, 1), DomainError);
    for (int d : {1, 2, 5}) {
        for (std::size_t m : {1, 3}) {
            for (int i = 0; i < 20; ++i) {
                const double sig = 0.05 + i * (0.99 - 0.05) / 19;
                // Tight at unit prior covariance, strict below it.
                const double b = mi_dataset_bound(d, sig, m);
                EXPECT_NEAR(b, mi_single_point(eye(d), sig, m).mi_ddpm, 1e-12 * (1 + b));
                EXPECT_LT(mi_single_point(0.8 * eye(d), sig, m).mi_ddpm, b);
            }
        }
    }
}

TEST(MiMonteCarlo, MatchesClosedForm) {
    const double s = std::sqrt(0.5);
    const auto mc = mi_monte_carlo_gaussian(s, 1000000, 7);
    EXPECT_NEAR(mc.estimate, 0.5 * std::log(2.0), 0.02);
    EXPECT_EQ(mc.draws, 1000000u);
    EXPECT_EQ(mi_monte_carlo_gaussian(s, 20000, 3).estimate, mi_monte_carlo_gaussian(s, 20000, 3).estimate);
    EXPECT_LT(mi_monte_carlo_gaussian(1.0, 100000, 1).estimate, 1e-3);
    EXPECT_THROW(mi_monte_carlo_gaussian(s, 9999, 1), DomainError);
}

TEST(MiMonteCarlo, ChunkMergeMatchesTwoPass) {
    const double s = 0.6, a = 0.8;
    const std::size_t n = (1u << 16) + 1234;
    const auto mc = mi_monte_carlo_gaussian(s, n, 11, 2.0);
    std::vector<double> x, y;
    for (std::size_t chunk = 0; chunk < 2; ++chunk) {
        RandomStream r(11, chunk);
        const std::size_t len = chunk == 0 ? (1u << 16) : 1234;
        for (std::size_t i = 0; i < len; ++i) {
            x.push_back(std::sqrt(2.0) * r.normal());
            y.push_back(a * x.back() + s * r.normal());
        }
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    EXPECT_NEAR(mc.correlation, sxy / std::sqrt(sxx * syy), 1e-12);
}

// Delta method: sd(estimate) ~ rho / sqrt(n). The RMS error over 40 seeds
// should be within a factor of two of it at each n.
TEST(MiMonteCarlo, ErrorScalesAsInverseSqrtDraws) {
    const double s = std::sqrt(0.5);
    const double truth = 0.5 * std::log(2.0), rho = std::sqrt(0.5);
    for (std::size_t n : {10000, 40000}) {
        double ss = 0;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const double e = mi_monte_carlo_gaussian(s, n, 1000 + seed).estimate - truth;
            ss += e * e;
        }
        const double rms = std::sqrt(ss / 40), expect = rho / std::sqrt(double(n));
        EXPECT_GT(rms, 0.5 * expect) << n;
        EXPECT_LT(rms, 2.0 * expect) << n;
    }
}
