#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hmflow/radial_kernel.hpp"

using namespace hmflow;

namespace {

// Long-double evaluation of the Gaussian, independent of eval_gamma.
long double gamma_ref(long double sq, int m, long double tau) {
    const long double pi = 3.141592653589793238462643383279502884L;
    return std::pow(4.0L * pi * tau, -0.5L * m) * std::exp(-sq / (4.0L * tau));
}

double gaussian_profile(double r, double s, int m, double tau) {
    return std::pow(s / (s + tau), 0.5 * m) * std::exp(-r * r / (4.0 * (s + tau)));
}

} // namespace

TEST(EvalGamma, UnitAtOriginForTauOneOverFourPi) {
    EXPECT_NEAR(eval_gamma(0.0, {3, 1.0 / (4.0 * std::numbers::pi)}), 1.0, 1e-15);
}

TEST(EvalGamma, MatchesExtendedPrecision) {
    const double want = static_cast<double>(gamma_ref(4.0L, 3, 1.0L));
    EXPECT_NEAR(eval_gamma(4.0, {3, 1.0}), want, 1e-16 * want);
    EXPECT_NEAR(want, std::pow(4.0 * std::numbers::pi, -1.5) * std::exp(-1.0), 1e-17);
}

TEST(EvalGamma, IntegratesToOne) {
    for (int m : {3, 4, 5, 7}) {
        for (double tau : {1e-3, 0.1, 2.0}) {
            const double area = sphere_area(m);
            auto f = [&](double r) { return eval_gamma(r * r, {m, tau}) * area * std::pow(r, m - 1); };
            const double mass = quad::integrate_panels(f, 0.0, 20.0 * std::sqrt(tau), 40, 32);
            EXPECT_NEAR(mass, 1.0, 1e-12) << "m=" << m << " tau=" << tau;
        }
    }
}

TEST(EvalGamma, RejectsNonPositiveTau) {
    EXPECT_THROW(eval_gamma(1.0, {3, 0.0}), DomainError);
    EXPECT_THROW(eval_gamma(1.0, {3, -1.0}), DomainError);
    EXPECT_THROW(eval_gamma(1.0, {2, 1.0}), DomainError);
}

TEST(Mode0Kernel, OriginReducesToGamma) {
    for (int m : {3, 5, 6})
        for (double rp : {0.0, 0.2, 1.5})
            EXPECT_NEAR(mode0_kernel(0.0, rp, {m, 0.3}), eval_gamma(rp * rp, {m, 0.3}), 1e-14);
}

TEST(Mode0Kernel, Symmetric) {
    for (int m : {3, 5})
        for (double r : {0.1, 0.7, 2.0})
            for (double rp : {0.05, 0.9, 3.0})
                EXPECT_DOUBLE_EQ(mode0_kernel(r, rp, {m, 0.2}), mode0_kernel(rp, r, {m, 0.2}));
}

TEST(Mode0Kernel, ThreeDimensionalClosedForm) {
    for (double r : {0.01, 0.3, 1.0, 2.5})
        for (double rp : {0.02, 0.5, 1.2})
            for (double tau : {1e-3, 0.05, 1.0}) {
                const double k = mode0_kernel_quadrature(r, rp, {3, tau});
                const double c = mode0_kernel_3d_closed_form(r, rp, tau);
                EXPECT_LE(std::abs(k - c), 1e-10 * std::max(c, 1e-300)) << r << " " << rp << " " << tau;
            }
}

TEST(Mode0Kernel, ElementaryAngularFormsMatchQuadrature) {
    for (int m : {3, 5})
        for (double z : {1e-3, 0.5, 1.3, 1.999, 2.0, 7.3, 150.0, 4e4})
            EXPECT_NEAR(angular_average(z, m), detail::angular_average_quadrature(z, m),
                        1e-12 * angular_average(z, m))
                << "m=" << m << " z=" << z;
}

TEST(Mode0Kernel, PositiveAndBelowGaussianEnvelope) {
    for (int m : {3, 5})
        for (double r : {0.1, 1.0})
            for (double rp : {0.2, 1.3})
                for (double tau : {0.01, 0.5}) {
                    const double k = mode0_kernel(r, rp, {m, tau});
                    EXPECT_GT(k, 0.0);
                    EXPECT_LE(k, eval_gamma((r - rp) * (r - rp), {m, tau}) * (1 + 1e-14));
                }
}

TEST(Mode0Kernel, NormalizedOnLogSweep) {
    for (int m : {3, 5})
        for (double r : {0.0, 0.3, 1.0, 3.0})
            for (int k = 0; k < 6; ++k) {
                const double tau = 1e-3 * std::pow(10.0, 0.6 * k);
                EXPECT_NEAR(kernel_mass(r, {m, tau}), 1.0, 1e-8);
            }
}

TEST(KernelOperator, RowsCarryUnitMass) {
    const auto grid = RadialGrid::uniform(0.0, 3.0, 150, 5);
    KernelOperator op(grid, 0.05);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(op.row_mass(i), 1.0, 1e-8);
}

TEST(KernelOperator, RequiresOriginNode) {
    const auto grid = RadialGrid::uniform(0.5, 3.0, 100, 3);
    EXPECT_THROW(KernelOperator(grid, 0.1), InvalidInput);
}

TEST(SemigroupApply, ConstantsArePreserved) {
    const auto grid = RadialGrid::uniform(0.0, 4.0, 200, 5);
    const auto out = semigroup_apply(RadialField::constant(grid, 2.5), 0.2);
    for (double v : out.values) EXPECT_NEAR(v, 2.5, 1e-12);
    EXPECT_DOUBLE_EQ(out.time, 0.2);
}

TEST(SemigroupApply, GaussianWidthsAdd) {
    for (int m : {3, 5}) {
        const auto grid = RadialGrid::uniform(0.0, 8.0, 400, m);
        const double s = 0.1, tau = 0.15;
        const auto u0 = RadialField::sample(grid, [&](double r) { return std::exp(-r * r / (4 * s)); });
        const auto out = semigroup_apply(u0, tau);
        for (std::size_t i = 0; i < grid.size(); ++i)
            EXPECT_NEAR(out.values[i], gaussian_profile(grid[i], s, m, tau), 1e-9);
    }
}

TEST(SemigroupApply, SupNormDoesNotIncrease) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const auto grid = RadialGrid::uniform(0.0, 3.0, 120, 3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto u0 = RadialField::sample(grid, [&](double) { return U(rng); });
        const auto out = semigroup_apply(u0, 0.01 * (trial + 1));
        EXPECT_LE(sup_norm(out.values), sup_norm(u0.values) + 1e-12);
    }
}

TEST(SemigroupApply, SemigroupProperty) {
    const auto grid = RadialGrid::uniform(0.0, 6.0, 300, 5);
    const auto u0 = RadialField::sample(grid, [](double r) { return std::exp(-r * r) * std::cos(2 * r); });
    const auto a = semigroup_apply(semigroup_apply(u0, 0.05), 0.1);
    const auto b = semigroup_apply(u0, 0.15);
    EXPECT_LE(sup_gap(a.values, b.values), 1e-6);
}

TEST(SemigroupApply, RejectsBadInput) {
    const auto grid = RadialGrid::uniform(0.0, 2.0, 40, 3);
    auto u0 = RadialField::constant(grid, 1.0);
    EXPECT_THROW(semigroup_apply(u0, 0.0), DomainError);
    u0.values[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(semigroup_apply(u0, 0.1), InvalidInput);
}

TEST(DuhamelIntegrate, UnitSourceGivesElapsedTime) {
    const auto grid = RadialGrid::uniform(0.0, 3.0, 60, 5);
    auto one = [&](double) { return std::vector<double>(grid.size(), 1.0); };
    const auto out = duhamel_integrate(grid, one, 0.2, 0.5, 8);
    for (double v : out.values) EXPECT_NEAR(v, 0.3, 1e-12);
    const auto d = radial_derivative(grid, out.values);
    EXPECT_LE(sup_norm(d), 1e-9);
}

TEST(DuhamelIntegrate, EmptyWindowIsZero) {
    const auto grid = RadialGrid::uniform(0.0, 3.0, 60, 5);
    auto one = [&](double) { return std::vector<double>(grid.size(), 1.0); };
    const auto out = duhamel_integrate(grid, one, 0.5, 0.5, 8);
    EXPECT_EQ(sup_norm(out.values), 0.0);
}

TEST(DuhamelIntegrate, NanSourceRejected) {
    const auto grid = RadialGrid::uniform(0.0, 3.0, 60, 5);
    auto bad = [&](double) { return std::vector<double>(grid.size(), std::nan("")); };
    EXPECT_THROW(duhamel_integrate(grid, bad, 0.0, 0.1, 2), InvalidInput);
}

TEST(DuhamelIntegrate, EvolvedGaussianSource) {
    // source(s) = e^{(s - t0) Laplacian} g, so the integral is (t - t0) e^{(t - t0) Laplacian} g.
    const int m = 5;
    const auto grid = RadialGrid::uniform(0.0, 8.0, 400, m);
    const double s0 = 0.1, t0 = 0.0, t = 0.2;
    auto source = [&](double s) {
        std::vector<double> v(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) v[i] = gaussian_profile(grid[i], s0, m, s - t0);
        return v;
    };
    const auto out = duhamel_integrate(grid, source, t0, t, 10);
    for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(out.values[i], (t - t0) * gaussian_profile(grid[i], s0, m, t - t0), 1e-6);
}

TEST(DuhamelIntegrate, BoundedByTimesSourceSup) {
    const auto grid = RadialGrid::uniform(0.0, 4.0, 100, 5);
    auto src = [&](double s) {
        std::vector<double> v(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) v[i] = std::sin(2 * grid[i] + 3 * s);
        return v;
    };
    const auto out = duhamel_integrate(grid, src, 0.0, 0.1, 10);
    EXPECT_LE(sup_norm(out.values), 0.1 + 1e-12);
    EXPECT_LT(duhamel_richardson_error(grid, src, 0.0, 0.1, 5), 5e-4);
}
