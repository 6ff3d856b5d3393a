#include <gtest/gtest.h>

#include <cmath>

#include "hmflow/hmflow.hpp"
#include "hmflow/quadrature.hpp"

using namespace hmflow;
using namespace hmflow::flow;

namespace {

// -2 b int_0^t e^{(t-s)Laplacian} e^{-r^2} ds in R^m, by the Gaussian convolution formula.
double linear_oracle(double r, double t, double b, int m) {
    return -2.0 * b * quad::integrate([&](double s) {
        const double q = 1.0 + 4.0 * (t - s);
        return std::pow(q, -0.5 * m) * std::exp(-r * r / q);
    }, 0.0, t, 64);
}

struct Manufactured {
    MetricFamily fam = metric::smooth_bump(3, 0.0, 0.9, 0.2, 0.1, 0.1, 0.05);
    static double alpha(double t) { return 0.2 * std::sin(3.0 * t); }
    double exact(double r, double t) const { return alpha(t) * std::exp(-r * r); }
    Forcing forcing() const {
        return [fam = fam](double r, double t) {
            const double e = std::exp(-r * r), a = alpha(t);
            const double u = a * e, p = -2.0 * r * a * e, lap = a * (4.0 * r * r - 10.0) * e;
            return 0.6 * std::cos(3.0 * t) * e - lap - F_eval_closure(fam, r, u, p, t);
        };
    }
};

FlowConfig level(int k) {
    FlowConfig c;
    c.intervals = 200 << k;
    c.dt = 0.02 / (1 << k);
    c.fixed_window = 0.1;
    return c;
}

double max_error(const FlowSolution& s, const Manufactured& mms) {
    double e = 0.0;
    for (std::size_t k = 0; k < s.times().size(); ++k)
        for (std::size_t i = 0; i < s.grid().size(); ++i)
            e = std::max(e, std::abs(s.rho_tilde(k)[i] - mms.exact(s.grid()[i], s.times()[k])));
    return e;
}

} // namespace

TEST(FlowSolve, EuclideanStaysIdentity) {
    const auto fam = metric::euclidean(3);
    const auto s = solve(fam, 0.5, FlowConfig{});
    EXPECT_DOUBLE_EQ(s.T0(), 0.5);
    for (const auto& v : s.trajectory.values) EXPECT_EQ(sup_norm(v), 0.0);
    for (double n : norm_monitor(s).norms) EXPECT_EQ(n, 0.0);
    const std::vector<double> theta{0.0, 0.6, 0.8};
    const auto p = map_eval(s, 1.7, theta, 0.33);
    EXPECT_DOUBLE_EQ(p.rho, 1.7);
    EXPECT_EQ(p.theta, theta);
    const auto R = residual(solve(fam, 0.5, level(0)));
    EXPECT_EQ(R.sup(s.grid(), 20.0), 0.0);
}

TEST(FlowSolve, InitialMapIsIdentity) {
    const auto s = solve(metric::smooth_bump(3, 0.0, 0.9, 0.1, 0.0, 0.05, 0.0), 0.3, FlowConfig{});
    const auto rho = s.rho(0);
    for (std::size_t i = 0; i < rho.size(); ++i) EXPECT_EQ(rho[i], s.grid()[i]);
    for (std::size_t k = 0; k < s.times().size(); ++k) EXPECT_EQ(s.rho(k)[0], 0.0);
    EXPECT_EQ(s.grid().dimension(), 5);
}

TEST(FlowSolve, SmallMetricMatchesLinearResponse) {
    for (double a0 : {1e-2, 1e-3}) {
        const auto fam = metric::cylinder_tail(3, 0.0, 0.9, 0.0, 0.0, a0, 0.0);
        const auto s = solve(fam, 0.5, FlowConfig{});
        const std::size_t K = s.times().size() - 1;
        double gap = 0.0, size = 0.0;
        for (std::size_t i = 0; i < s.grid().size(); ++i) {
            const double ref = linear_oracle(s.grid()[i], s.times()[K], a0, 5);
            gap = std::max(gap, std::abs(s.rho_tilde(K)[i] - ref));
            size = std::max(size, std::abs(ref));
        }
        EXPECT_GT(size, 0.1 * a0);
        EXPECT_LT(size, a0);
        EXPECT_LE(gap, 1e-3 * size) << "a0 " << a0;
        // The library's own linearization agrees with the oracle too.
        const auto lin = linearized_response(fam, s.grid(), s.times()[K], 100);
        for (std::size_t i = 0; i < s.grid().size(); i += 10)
            EXPECT_NEAR(lin[i], linear_oracle(s.grid()[i], s.times()[K], a0, 5), 1e-4 * a0);
    }
}

TEST(FlowSolve, MonotoneMapForSmallAmplitude) {
    const auto s = solve(metric::smooth_bump(3, 0.0, 0.9, 0.05, 0.02, 0.02, 0.01), 0.5, FlowConfig{});
    const std::vector<double> theta{1.0, 0.0, 0.0};
    for (double t : {0.1, 0.25, 0.5}) {
        double prev = -1.0;
        for (int j = 0; j <= 100; ++j) {
            const double rho = map_eval(s, 0.19 * j, theta, t).rho;
            EXPECT_GT(rho, prev);
            prev = rho;
        }
    }
}

TEST(FlowSolve, LiftMatchesDirectSolve) {
    const auto fam = metric::cylinder_tail(3, 0.0, 0.9, 0.0, 0.0, 1e-2, 0.0);
    FlowConfig c;
    c.intervals = 800;
    c.dt = 2.5e-3;
    c.fixed_window = 0.1;
    const auto s = solve(fam, 0.5, c);
    const auto d = direct_solve(fam, 0.5, c);
    ASSERT_EQ(d.times.size(), s.times().size());
    EXPECT_LE(sup_gap(d.values.back(), s.rho_tilde(s.times().size() - 1)), 1e-6);
}

TEST(FlowSolve, RejectsSingularOrigin) {
    // ft(0, t) moves with t: G is unbounded at r = 0.
    const auto fam = metric::exp_bump(3, 0.0, 0.9, 0.1, 0.2, 0.0, 0.0);
    EXPECT_THROW(solve(fam, 0.5, FlowConfig{}), DomainError);
    EXPECT_THROW(direct_solve(fam, 0.5, FlowConfig{}), DomainError);
    EXPECT_NO_THROW(solve(metric::exp_bump(3, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0), 0.1, FlowConfig{}));
}

TEST(FlowSolve, RejectsBadHorizonAndShortDomain) {
    const auto fam = metric::euclidean(3, 0.2, 0.9);
    EXPECT_THROW(solve(fam, 0.1, FlowConfig{}), DomainError);
    EXPECT_THROW(solve(fam, 0.95, FlowConfig{}), DomainError);
    FlowConfig c;
    c.r_max = 10.0;
    EXPECT_THROW(solve(fam, 0.5, c), InvalidInput);
}

TEST(FlowSolve, NonzeroStartTime) {
    const auto fam = metric::smooth_bump(3, 0.2, 0.9, 0.05, 0.0, 0.02, 0.0);
    const auto s = solve(fam, 0.6, FlowConfig{});
    EXPECT_DOUBLE_EQ(s.times().front(), 0.2);
    EXPECT_EQ(sup_norm(s.rho_tilde(0)), 0.0);
    EXPECT_GT(sup_norm(s.rho_tilde(s.times().size() - 1)), 0.0);
}

TEST(MapEval, RejectsExtrapolation) {
    const auto s = solve(metric::euclidean(3), 0.3, FlowConfig{});
    const std::vector<double> theta{0.0, 0.0, 1.0};
    EXPECT_THROW(map_eval(s, 1.0, theta, 0.31), DomainError);
    EXPECT_THROW(map_eval(s, 21.0, theta, 0.1), DomainError);
    EXPECT_THROW(map_eval(s, -0.1, theta, 0.1), DomainError);
    EXPECT_DOUBLE_EQ(map_eval(s, 0.0, theta, 0.2).rho, 0.0);
}

TEST(Manufactured, SpaceTimeOrder) {
    const Manufactured mms;
    double e[3];
    for (int k = 0; k < 3; ++k) e[k] = max_error(solve(mms.fam, 0.5, level(k), mms.forcing()), mms);
    EXPECT_LT(e[1], e[0]);
    EXPECT_LT(e[2], e[1]);
    EXPECT_GE(std::log2(e[0] / e[1]), 1.5);
    EXPECT_GE(std::log2(e[1] / e[2]), 1.5);
}

TEST(Manufactured, ResidualShrinksUnderRefinement) {
    const Manufactured mms;
    double prev = 0.0;
    for (int k = 0; k < 3; ++k) {
        const auto s = solve(mms.fam, 0.5, level(k), mms.forcing());
        const double r = residual(s, mms.forcing()).sup(s.grid(), 10.0);
        if (prev > 0.0) {
            EXPECT_LE(3.0 * r, prev);
        }
        prev = r;
    }
}

TEST(Residual, RequiresUniformTimes) {
    FlowConfig c;
    c.dt = 0.01;
    auto s = solve(metric::euclidean(3), 0.3, c);
    s.trajectory.times[2] += 1e-3;
    EXPECT_THROW(residual(s), InvalidInput);
}
