#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hmflow/metric_model.hpp"

using namespace hmflow;

namespace {

std::vector<MetricFamily> all_families() {
    return {
        metric::euclidean(3, 0.0, 0.9),
        metric::exp_bump(3, 0.0, 0.9, 0.3, 0.0, 0.2, 0.1),
        metric::exp_bump(4, 0.1, 1.2, -0.2, 0.0, 0.05, -0.3),
        metric::smooth_bump(3, 0.0, 0.9, 0.4, 0.5, 0.1, 0.2),
        metric::cylinder_tail(3, 0.0, 0.9, 0.5, 0.3, 0.2, 0.0),
    };
}

} // namespace

TEST(Drift, EuclideanVanishes) {
    const auto f = metric::euclidean();
    for (double r : {0.1, 1.0, 5.0})
        for (double t : {0.0, 0.5}) EXPECT_EQ(drift_coefficient(f, r, t), 0.0);
}

TEST(Drift, ExpBumpAtUnitRadius) {
    const double a = 0.7;
    const int n = 4;
    const auto f = metric::exp_bump(n, 0.0, 1.0, a, 0.0, 0.0, 0.0);
    EXPECT_NEAR(drift_coefficient(f, 1.0, 0.3), -2 * a * (n - 1) * std::exp(-1.0), 1e-14);
    // Finite difference of ft(r^2, t) in r.
    const double h = 1e-5;
    const double fd = (f.ft(std::pow(1 + h, 2), 0.3) - f.ft(std::pow(1 - h, 2), 0.3)) / (2 * h);
    EXPECT_NEAR(drift_coefficient(f, 1.0, 0.3), (n - 1) * fd, 1e-8);
}

TEST(Drift, ConstantSpeed) {
    auto f = metric::euclidean();
    f.xi = [](double, double) { return 0.4; };
    EXPECT_NEAR(drift_coefficient(f, 2.0, 0.1), -0.8, 1e-15);
}

TEST(Drift, RejectsNonPositiveRadius) {
    EXPECT_THROW(drift_coefficient(metric::euclidean(), 0.0, 0.0), DomainError);
}

TEST(NonlinearityG, EuclideanVanishes) {
    const auto f = metric::euclidean();
    for (double rho : {-0.5, 0.0, 0.7})
        for (double w : {1e-9, 0.1, 4.0}) EXPECT_EQ(nonlinearity_G(f, rho, w, 0.2), 0.0);
}

TEST(NonlinearityG, InitialTimeReducesToSpeed) {
    for (const auto& f : all_families())
        for (double w : {1e-8, 1e-4, 0.3, 1.0, 6.0})
            EXPECT_NEAR(nonlinearity_G(f, 0.0, w, f.t0) + 2 * f.xi(w, f.t0), 0.0, 1e-10) << f.name << " w=" << w;
}

TEST(NonlinearityG, BoundedNearOrigin) {
    // Below the switch the series branch must agree with a long-double evaluation.
    for (const auto& f : all_families()) {
        if (!f.origin_compatible(0.5)) continue;
        for (double rho : {-0.3, 0.2}) {
            const double w = 5e-7;
            const long double e2 = std::exp(2.0L * rho);
            const long double D = 2.0L * f.ft0(w * static_cast<double>(e2)) - 2.0L * f.ft(w, 0.5);
            const double ref_first = static_cast<double>(-(f.n - 1) * std::expm1(D) / w);
            const double rest = 2.0 * (f.n - 1) * f.ft_w(w, 0.5) -
                                2.0 * (f.n - 1) * std::exp(static_cast<double>(D) + 2 * rho) * f.ft0_w(w * e2) -
                                2.0 * f.xi(w, 0.5);
            EXPECT_NEAR(nonlinearity_G(f, rho, w, 0.5), ref_first + rest, 1e-6) << f.name;
            const double g_small = nonlinearity_G(f, rho, 1e-12, 0.5);
            const double g_mid = nonlinearity_G(f, rho, 1e-3, 0.5);
            EXPECT_TRUE(std::isfinite(g_small));
            EXPECT_NEAR(g_small, g_mid, 0.05 + 0.05 * std::abs(g_mid)) << f.name;
        }
    }
}

TEST(NonlinearityG, IncompatibleFamilyIsRejectedAtOrigin) {
    const auto f = metric::exp_bump(3, 0.0, 0.9, 0.3, 0.5, 0.0, 0.0);
    EXPECT_FALSE(f.origin_compatible(0.4));
    EXPECT_THROW(nonlinearity_G(f, 0.0, 1e-9, 0.4), DomainError);
    EXPECT_TRUE(std::isfinite(nonlinearity_G(f, 0.0, 0.5, 0.4)));
}

TEST(NonlinearityG, RejectsNonPositiveW) {
    EXPECT_THROW(nonlinearity_G(metric::euclidean(), 0.0, 0.0, 0.0), DomainError);
    EXPECT_THROW(nonlinearity_G(metric::euclidean(), 0.0, -1.0, 0.0), DomainError);
}

TEST(FEval, EuclideanCases) {
    const auto f = metric::euclidean();
    EXPECT_EQ(F_eval(f, 0.5, 0.0, 0.0, 0.1), 0.0);
    EXPECT_DOUBLE_EQ(F_eval(f, 0.5, 0.3, -1.7, 0.1), 1.7 * 1.7);
}

TEST(FEval, CompositionalIdentity) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (const auto& f : all_families())
        for (int k = 0; k < 50; ++k) {
            const double r = 0.05 + 3 * (U(rng) + 1), rho = 0.5 * U(rng), p = U(rng);
            const double t = f.t0 + 0.5 * (U(rng) + 1) * (f.horizon - f.t0);
            const double want = drift_coefficient(f, r, t) * p + p * p + nonlinearity_G(f, rho, r * r, t);
            EXPECT_DOUBLE_EQ(F_eval(f, r, rho, p, t), want);
        }
}

TEST(MetricFamily, BHalfIntegratesXi) {
    for (const auto& f : all_families())
        for (double t : {f.t0, 0.5 * (f.t0 + f.horizon)}) {
            EXPECT_EQ(f.B(0.0, t), 0.0);
            for (double w : {0.1, 1.0, 3.0}) {
                const double h = 1e-5;
                const double dB = (f.B(w + h, t) - f.B(w - h, t)) / (2 * h);
                EXPECT_NEAR(2 * dB, f.xi(w, t), 1e-6) << f.name;
            }
        }
}

TEST(MetricFamily, QuadratureBMatchesClosedForm) {
    for (auto f : all_families()) {
        auto closed = *f.b_closed;
        f.b_closed.reset();
        for (double w : {0.2, 2.0, 7.5})
            EXPECT_NEAR(f.B(w, 0.3), closed(w, 0.3), 1e-12) << f.name;
    }
}

TEST(MetricFamily, InitialTimeCompatibility) {
    for (const auto& f : all_families())
        for (double w : {0.0, 0.5, 2.0}) EXPECT_EQ(f.ft(w, f.t0), f.ft0(w));
}

TEST(MetricFamily, HorizonValidated) {
    EXPECT_THROW(metric::euclidean(3, 0.0, 1.0), DomainError);
    EXPECT_THROW(metric::euclidean(3, 0.5, 0.4), DomainError);
    EXPECT_THROW(metric::euclidean(2, 0.0, 0.2), DomainError);
}

TEST(ScalarCurvature, Values) {
    EXPECT_DOUBLE_EQ(scalar_curvature_h({3, 0.0}), 1.0);
    EXPECT_NEAR(scalar_curvature_h({4, 0.75}), 2.0, 1e-15);
    EXPECT_LT(scalar_curvature_h({4, 0.2}), scalar_curvature_h({4, 0.3}));
    EXPECT_THROW(scalar_curvature_h({4, 1.5}), DomainError);
    EXPECT_THROW(scalar_curvature_h({4, -0.1}), DomainError);
}
