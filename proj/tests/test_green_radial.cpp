#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hmflow/green_radial.hpp"
#include "hmflow/green_verify.hpp"

using namespace hmflow;
using namespace hmflow::green;

namespace {

// Coarse defaults keep each table well under a second.
constexpr double kH = 1.0 / 160;

TimeAxis short_axis() { return TimeAxis::make(4e-4, 0.12, 0.02); }

KernelTable ball(double R, int m, double h = kH, TimeAxis axis = short_axis(),
                 std::optional<Mollifier> mol = std::nullopt) {
    const auto g = domain_grid(DomainSpec::ball(R, m), h);
    return build_ball_kernel(R, m, g, axis, aligned_sources(g, 8 * h), mol);
}

KernelTable annulus(double eps, double R, int m, double h = kH, TimeAxis axis = short_axis()) {
    const auto g = domain_grid(DomainSpec::annulus(eps, R, m), h);
    return build_annulus_kernel(eps, R, m, g, axis, std::nullopt, aligned_sources(g, 8 * h));
}

// m = 3 ball: u = r v turns the radial problem into the 1-D Dirichlet problem on
// (0, R), whose kernel is an image sum; G0 = p(r, r') / (4 pi r r').
double ball3_images(double r, double rp, double tau, double R) {
    auto phi = [&](double x) { return std::exp(-x * x / (4 * tau)) / std::sqrt(4 * std::numbers::pi * tau); };
    double p = 0.0;
    for (int k = -8; k <= 8; ++k) p += phi(r - rp + 2 * k * R) - phi(r + rp + 2 * k * R);
    return p / (4 * std::numbers::pi * r * rp);
}

} // namespace

TEST(Mollifier, RampShape) {
    EXPECT_EQ(Mollifier::eta(0.0), 0.0);
    EXPECT_EQ(Mollifier::eta(0.5), 0.0);
    EXPECT_EQ(Mollifier::eta(1.0), 1.0);
    EXPECT_EQ(Mollifier::eta(3.0), 1.0);
    EXPECT_NEAR(Mollifier::eta(0.75), 0.5, 1e-15);
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double v = Mollifier::eta(0.5 + 0.005 * i);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_EQ((Mollifier{0.25})(0.25), 1.0);
    EXPECT_THROW((Mollifier{0.0}).validate(), DomainError);
    EXPECT_THROW((Mollifier{1.5}).validate(), DomainError);
}

TEST(DomainSpec, RejectsBadGeometry) {
    EXPECT_THROW(DomainSpec::ball(-1.0, 3), DomainError);
    EXPECT_THROW(DomainSpec::ball(1.0, 2), DomainError);
    EXPECT_THROW(DomainSpec::annulus(1.0, 1.0, 3), DomainError);
    EXPECT_THROW(DomainSpec::annulus(0.0, 1.0, 3), DomainError);
    EXPECT_THROW(DomainSpec::exterior(5.0, 3), DomainError);
    EXPECT_FALSE(DomainSpec::exterior(10.0, 3).has_outer_boundary());
    EXPECT_TRUE(DomainSpec::exterior(10.0, 3).has_inner_boundary());
    EXPECT_FALSE(DomainSpec::ball(1.0, 3).has_inner_boundary());
}

TEST(TimeAxis, StoredTimesAndLookup) {
    const auto a = TimeAxis::make(1e-3, 0.1, 0.02);
    EXPECT_EQ(a.steps, 100);
    EXPECT_EQ(a.stored(), 5u);
    EXPECT_NEAR(a.stored_time(0), 0.02, 1e-15);
    EXPECT_NEAR(a.stored_time(4), 0.1, 1e-15);
    EXPECT_EQ(a.find_time(0.06), 2u);
    EXPECT_EQ(a.find_time(0.061), npos);
    EXPECT_THROW(TimeAxis::make(1e-3, 0.1, 0.03), InvalidInput);
}

TEST(BallKernel, MatchesImageSeriesInThreeDimensions) {
    const auto t = ball(1.0, 3, 1.0 / 320, TimeAxis::make(1e-4, 0.1, 0.02));
    double worst = 0.0, sup = 0.0;
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t s = 0; s < t.sources(); ++s) {
            const double rp = t.source_radius(s);
            if (rp == 0.0) continue;
            for (std::size_t i = 1; i < t.nodes(); ++i) {
                const double ref = ball3_images(t.grid[i], rp, t.time(k), 1.0);
                worst = std::max(worst, std::abs(t.value(i, s, k) - ref));
                sup = std::max(sup, std::abs(ref));
            }
        }
    EXPECT_LT(worst / sup, 2e-3);
}

TEST(BallKernel, SignBoundsAndBoundaryRows) {
    for (int m : {3, 5}) {
        const auto t = ball(1.0, m);
        EXPECT_TRUE(check_nonnegative(t).passed) << check_nonnegative(t).line();
        EXPECT_TRUE(check_below_free(t).passed) << check_below_free(t).line();
        EXPECT_TRUE(check_dirichlet_rows(t).passed);
        EXPECT_TRUE(check_flux_nonnegative(t).passed);
        EXPECT_TRUE(check_conservation_defect(t, 0.02).passed) << check_conservation_defect(t, 0.02).line();
    }
}

TEST(BallKernel, SymmetricAwayFromBoundary) {
    const auto t = ball(1.0, 5, 1.0 / 320, TimeAxis::make(2e-4, 0.1, 0.02));
    const auto c = check_symmetry(t);
    EXPECT_TRUE(c.passed) << c.line();
}

TEST(BallKernel, MassDropsOverTime) {
    const auto t = ball(1.0, 3);
    const auto mass = kernel_mass(t);
    const std::size_t s = t.find_source(0.5);
    ASSERT_NE(s, npos);
    EXPECT_LT(mass[s].back(), mass[s].front());
    EXPECT_LT(mass[s].front(), 1.0);
    EXPECT_GT(mass[s].front(), 0.5);
}

TEST(BallKernel, RejectsBadInput) {
    const auto g = domain_grid(DomainSpec::ball(1.0, 3), kH);
    EXPECT_THROW(build_ball_kernel(1.0, 3, g, short_axis(), {g.size() - 1}), InvalidInput);
    EXPECT_THROW(build_ball_kernel(2.0, 3, g, short_axis()), InvalidInput);
    EXPECT_THROW(build_ball_kernel(1.0, 5, g, short_axis()), InvalidInput);
    EXPECT_THROW(domain_grid(DomainSpec::ball(1.0, 3), 0.3), InvalidInput);
}

TEST(Comparison, AnnulusBallLargerBallFree) {
    const int m = 5;
    const auto a = annulus(0.1, 1.0, m);
    const auto b1 = ball(1.0, m);
    const auto b2 = ball(2.0, m);
    EXPECT_TRUE(check_ordering("annulus <= ball", a, b1).passed);
    EXPECT_TRUE(check_ordering("ball <= larger ball", b1, b2).passed);
    EXPECT_TRUE(check_free_bound("larger ball <= free", b2).passed);
    // The gap is real, not a tie.
    EXPECT_GT(sup_difference(a, b1), 1e-3);
}

TEST(Comparison, AnnuliBelowExterior) {
    const int m = 3;
    const double h = 1.0 / 32;
    const auto axis = TimeAxis::make(2e-3, 0.4, 0.1);
    const auto a1 = annulus(1.0, 3.0, m, h, axis);
    const auto a2 = annulus(1.0, 6.0, m, h, axis);
    const auto ge = domain_grid(DomainSpec::exterior(10.0, m), h);
    const auto ex = build_exterior_kernel(10.0, m, ge, axis, aligned_sources(ge, 0.25));
    EXPECT_TRUE(check_ordering("R1 <= R2", a1, a2).passed);
    EXPECT_TRUE(check_ordering("R2 <= exterior", a2, ex).passed);
    EXPECT_TRUE(check_nonnegative(ex).passed);
    EXPECT_TRUE(check_flux_nonnegative(ex).passed);
    EXPECT_TRUE(check_exterior_truncation(ex, {1.0, 4.0, 0.0}).passed);
}

TEST(Mollified, OrderedInDeltaAndConverging) {
    const int m = 3;
    const auto axis = short_axis();
    const auto base = ball(1.0, m, kH, axis);
    std::vector<KernelTable> fam;
    for (double d : {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}) fam.push_back(ball(1.0, m, kH, axis, Mollifier{d}));
    for (std::size_t i = 0; i + 1 < fam.size(); ++i) {
        // Smaller delta switches the boundary data on earlier: G^{delta'} <= G^{delta}.
        EXPECT_TRUE(check_ordering("delta order", fam[i + 1], fam[i]).passed);
        EXPECT_TRUE(check_ordering("unmollified below", base, fam[i + 1]).passed);
    }
    const Window w{0.0, 0.5, 0.05};
    double prev = INFINITY;
    for (const auto& t : fam) {
        const double gap = sup_difference(t, base, w);
        EXPECT_LT(gap, prev);
        prev = gap;
    }
}

TEST(Scaling, HalfRadiusInThreeDimensions) {
    const auto rep = verify_scaling(0.5, 2.0, 3, 1.0 / 64, TimeAxis::make(1e-3, 0.1, 0.02));
    EXPECT_LE(rep.value_mismatch, 1e-3);
    EXPECT_LE(rep.flux_mismatch, 1e-3);
}

TEST(Scaling, UnitEpsIsExact) {
    const auto rep = verify_scaling(1.0, 3.0, 3, 1.0 / 32, TimeAxis::make(1e-3, 0.05, 0.01));
    EXPECT_EQ(rep.value_mismatch, 0.0);
    EXPECT_EQ(rep.flux_mismatch, 0.0);
}

TEST(Scaling, IncompatibleGridsThrow) {
    const auto a = annulus(0.25, 1.0, 3, 1.0 / 32);
    const auto b = annulus(0.25, 1.0, 3, 1.0 / 64);
    EXPECT_THROW(scaling_mismatch(a, b, 0.5), InvalidInput);
}

TEST(EpsilonLimit, GapShrinksWithEps) {
    const auto rep = verify_epsilon_limit({0.2, 0.1, 0.05}, 1.0, 3, 1.0 / 160, short_axis());
    EXPECT_TRUE(rep.decreasing);
    EXPECT_GE(rep.fitted_order, rep.proof_order - 0.2);
    EXPECT_EQ(rep.capacity_order, 1.0);
}

TEST(EpsilonLimit, Preconditions) {
    EXPECT_THROW(verify_epsilon_limit({0.1, 0.2}, 1.0, 3, kH, short_axis()), InvalidInput);
    EXPECT_THROW(verify_epsilon_limit({0.2, 0.01}, 1.0, 3, kH, short_axis()), InvalidInput);
    EXPECT_THROW(verify_epsilon_limit({0.3, 0.2}, 1.0, 3, kH, short_axis(), Window{0.1, 0.75, 0.0}), InvalidInput);
}

TEST(Flux, ArraysMatchTable) {
    const auto t = annulus(0.25, 1.0, 3, 1.0 / 64);
    const auto f = flux(t, Side::inner);
    ASSERT_EQ(f.radii.size(), t.sources());
    ASSERT_EQ(f.times.size(), static_cast<std::size_t>(t.axis.steps + 1));
    EXPECT_EQ(f.values[1][7], t.flux_series(Side::inner, 1)[7]);
    EXPECT_THROW(flux(ball(1.0, 3), Side::inner), InvalidInput);
}

TEST(Flux, FarFieldDecayExponent) {
    const auto rep = flux_decay_probe({4, 8, 16}, 3, 1.0 / 16, 0.01);
    EXPECT_TRUE(rep.check().passed) << rep.check().line();
}

TEST(Envelope, RecoversExactGaussian) {
    std::vector<EnvelopeSample> s;
    const int m = 5;
    for (double d : {0.05, 0.2, 0.4, 0.6})
        for (double tau : {0.01, 0.03, 0.1})
            s.push_back({d, tau, 0.5, 0.5 * 2.0 * std::pow(tau, -3.0) * std::exp(-0.3 * d * d / tau)});
    const auto fit = fit_envelope("exact", s, m, {.fixed_c = std::nullopt, .floor = 0.0, .hull_bins = 0});
    ASSERT_TRUE(fit.ok);
    EXPECT_NEAR(fit.c, 0.3, 1e-10);
    EXPECT_NEAR(fit.C, 2.0, 1e-9);
    EXPECT_LT(fit.residual, 1e-8);
    EXPECT_NEAR(fit.C_bound, 2.0, 1e-9);
}

TEST(Envelope, BoundCoversEverySample) {
    const auto t = ball(1.0, 3);
    const auto samples = flux_samples(t, Side::outer);
    const auto fit = fit_envelope("ball outer flux", samples, 3);
    ASSERT_TRUE(fit.ok) << fit.note;
    double vmax = 0.0;
    for (const auto& x : samples) vmax = std::max(vmax, x.value);
    for (const auto& x : samples) {
        if (x.value <= 1e-8 * vmax) continue;
        EXPECT_LE(x.value, fit.envelope(x.d, x.tau, x.prefactor, 3) * (1 + 1e-9));
    }
    EXPECT_TRUE(gaussian_factor_sanity(3));
    EXPECT_TRUE(gaussian_factor_sanity(5));
}

TEST(Envelope, TooFewSamplesReported) {
    const auto fit = fit_envelope("empty", {}, 3);
    EXPECT_FALSE(fit.ok);
    EXPECT_FALSE(fit.note.empty());
}
