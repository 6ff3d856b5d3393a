#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hmflow/duhamel_solver.hpp"

using namespace hmflow;
using namespace hmflow::solver;

namespace {

RadialGrid grid5() { return RadialGrid::uniform(0.0, 12.0, 120, 5); }

// Heat-evolved Gaussian in R^m, started at width s.
double profile(double r, double s, int m, double t) {
    return std::pow(s / (s + t), 0.5 * m) * std::exp(-r * r / (4.0 * (s + t)));
}

const SourceFn zero_source = [](double, double, double, double) { return 0.0; };

// Gradient-coupled source with a decaying bump keeping the solution localized.
SourceFn coupled_source(int m) {
    return [m](double r, double u, double p, double t) {
        return 0.5 * std::sin(u) + 0.4 * p * std::exp(-r * r) + profile(r, 0.5, m, t);
    };
}

std::vector<double> bump(const RadialGrid& g, double amp = 0.3) {
    std::vector<double> u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = amp * std::exp(-g[i] * g[i]);
    return u;
}

} // namespace

TEST(PicardStep, ZeroSourceKeepsZero) {
    const auto g = grid5();
    OperatorCache cache(g);
    const auto& ops = cache.get(0.01);
    const auto v = free_path(ops, std::vector<double>(g.size(), 0.0), 0.0, 10);
    const auto next = picard_step(g, ops, v, v, zero_source);
    for (const auto& u : next.u)
        for (double x : u) EXPECT_EQ(x, 0.0);
}

TEST(PicardStep, UnitSourceGivesElapsedTime) {
    const auto g = grid5();
    OperatorCache cache(g);
    const auto& ops = cache.get(0.02);
    const auto v = free_path(ops, std::vector<double>(g.size(), 0.0), 0.3, 10);
    const auto next = picard_step(g, ops, v, v, [](double, double, double, double) { return 1.0; });
    for (std::size_t k = 0; k < next.size(); ++k)
        for (double x : next.u[k]) EXPECT_NEAR(x, next.times[k] - 0.3, 1e-12);
}

TEST(PicardStep, ReproducesClosedFormDuhamel) {
    // Source e^{s Laplacian} of a Gaussian: its Duhamel integral is t times the evolved Gaussian.
    const auto g = RadialGrid::uniform(0.0, 10.0, 400, 5);
    OperatorCache cache(g);
    const auto& ops = cache.get(0.01);
    const auto v = free_path(ops, std::vector<double>(g.size(), 0.0), 0.0, 20);
    const SourceFn F = [](double r, double, double, double t) { return profile(r, 0.3, 5, t); };
    const auto next = picard_step(g, ops, v, v, F);
    for (std::size_t k = 0; k < next.size(); ++k)
        for (std::size_t i = 0; i < g.size(); ++i)
            EXPECT_NEAR(next.u[k][i], next.times[k] * profile(g[i], 0.3, 5, next.times[k]), 1e-6);
}

TEST(PicardStep, NonFiniteSourceSignalsBlowup) {
    const auto g = grid5();
    OperatorCache cache(g);
    const auto& ops = cache.get(0.01);
    const auto v = free_path(ops, bump(g), 0.0, 4);
    const SourceFn F = [](double r, double, double, double) { return r > 3.0 ? std::nan("") : 0.0; };
    EXPECT_THROW(picard_step(g, ops, v, v, F), BlowupSignal);
}

TEST(SolveWindow, ZeroSourceConvergesImmediately) {
    const auto g = grid5();
    SolveConfig cfg(g);
    cfg.dt = 0.01;
    OperatorCache cache(g);
    const auto res = solve_window(std::vector<double>(g.size(), 0.0), 0.0, 0.1, zero_source, cfg, cache, 0.1);
    EXPECT_EQ(res.iterations, 1);
    EXPECT_EQ(path_c1(g, res.path), 0.0);
}

TEST(SolveWindow, HugeWindowDoesNotContract) {
    const auto g = grid5();
    SolveConfig cfg(g);
    cfg.dt = 0.05;
    cfg.policy.enforce_bound = false;
    OperatorCache cache(g);
    const SourceFn F = [](double, double u, double, double) { return 3.0 * u; };
    EXPECT_THROW(solve_window(bump(g), 0.0, 8.0, F, cfg, cache, 1.0), NoContraction);
}

TEST(SolveWindow, BoundViolationIsRejected) {
    const auto g = grid5();
    SolveConfig cfg(g);
    cfg.dt = 0.01;
    OperatorCache cache(g);
    const SourceFn F = [](double, double, double, double) { return 10.0; };
    EXPECT_THROW(solve_window(bump(g), 0.0, 0.1, F, cfg, cache, 0.3), BoundExceeded);
}

TEST(SolveWindow, ContractionRatioFollowsWindowLength) {
    const auto g = grid5();
    SolveConfig cfg(g);
    cfg.dt = 1e-3;
    cfg.tolerance = 1e-13;
    cfg.policy.enforce_bound = false;
    OperatorCache cache(g);
    const auto F = coupled_source(5);
    double prev = 0.0;
    for (double delta : {0.256, 0.064, 0.016}) {
        const auto res = solve_window(bump(g), 0.0, delta, F, cfg, cache, 1.0);
        EXPECT_GT(res.contraction_ratio, 0.0);
        if (prev > 0.0) {
            EXPECT_LE(res.contraction_ratio, 0.5 * prev) << "delta " << delta;
        }
        prev = res.contraction_ratio;
    }
}

TEST(SolveConfig, RejectsBadSettings) {
    SolveConfig cfg(grid5());
    cfg.tolerance = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg.tolerance = 1e-8;
    cfg.metric_scale = 1.0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg.metric_scale = 0.5;
    EXPECT_NO_THROW(cfg.validate());
    SolveConfig off(RadialGrid::uniform(0.5, 4.0, 40, 5));
    EXPECT_THROW(off.validate(), InvalidInput);
}

TEST(WindowSteps, RoundsToTimeStep) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    auto [n, h] = window_steps(0.1, cfg);
    EXPECT_EQ(n, 10);
    EXPECT_DOUBLE_EQ(h, 0.01);
    std::tie(n, h) = window_steps(0.015, cfg);
    EXPECT_EQ(n, 4);
    EXPECT_NEAR(n * h, 0.015, 1e-15);
}

TEST(ContinueToBlowup, ZeroSourceReachesHorizon) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    const auto tr = continue_to_blowup(std::vector<double>(cfg.grid.size(), 0.0), 0.0, 2.0, zero_source, cfg);
    EXPECT_FALSE(tr.blew_up);
    EXPECT_DOUBLE_EQ(tr.T0, 2.0);
    EXPECT_NEAR(tr.times.back(), 2.0, 1e-12);
    for (double n : tr.norms) EXPECT_EQ(n, 0.0);
}

TEST(ContinueToBlowup, ForcedBlowupMatchesArctangentTime) {
    // Constant data and u-only source: u(t) = tan(lambda t) exactly.
    SolveConfig cfg(RadialGrid::uniform(0.0, 20.0, 200, 5));
    cfg.dt = 1e-2;
    for (double lambda : {1.0, 4.0}) {
        const SourceFn F = [lambda](double, double u, double, double) { return lambda * (1.0 + u * u); };
        const auto tr = continue_to_blowup(std::vector<double>(cfg.grid.size(), 0.0), 0.0, 3.0, F, cfg);
        const double exact = 0.5 * std::numbers::pi / lambda;
        EXPECT_TRUE(tr.blew_up);
        EXPECT_NEAR(tr.T0, exact, 1e-2 * exact) << tr.stop_reason;
        for (std::size_t k = 1; k < tr.norms.size(); ++k) EXPECT_GE(tr.norms[k], tr.norms[k - 1]);
        for (const auto& w : tr.windows) EXPECT_LE(w.max_iterate_norm, 2.0 * w.C1 * (1.0 + 1e-12));
    }
}

TEST(ContinueToBlowup, RestartMatchesDirectRun) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    const auto F = coupled_source(5);
    const auto u0 = bump(cfg.grid);
    ContinueOptions a, b;
    a.fixed_window = 0.2;
    b.fixed_window = 0.3;
    const auto direct = continue_to_blowup(u0, 0.0, 1.2, F, cfg, a);
    const auto head = continue_to_blowup(u0, 0.0, 0.3, F, cfg, b);
    const auto tail = continue_to_blowup(head.values.back(), 0.3, 1.2, F, cfg, a);
    const auto gap = uniqueness_gap(direct, tail);
    EXPECT_LE(gap.final_gap(), 1e-6);
    EXPECT_LE(uniqueness_gap(direct, head).final_gap(), 1e-6);
}

TEST(Uniqueness, IdenticalRunsHaveZeroGap) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    const auto tr = continue_to_blowup(bump(cfg.grid), 0.0, 0.5, coupled_source(5), cfg);
    const auto rep = uniqueness_gap(tr, tr);
    for (double e : rep.E) EXPECT_EQ(e, 0.0);
}

TEST(Uniqueness, PerturbedGuessReconverges) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    const auto F = coupled_source(5);
    const auto u0 = bump(cfg.grid);
    ContinueOptions plus, minus;
    plus.fixed_window = minus.fixed_window = 0.1;
    plus.perturb = [](double r, double) { return 1e-3 * std::exp(-r * r); };
    minus.perturb = [](double r, double) { return -1e-3 * std::cos(r); };
    const auto a = continue_to_blowup(u0, 0.0, 1.0, F, cfg, plus);
    const auto b = continue_to_blowup(u0, 0.0, 1.0, F, cfg, minus);
    const auto rep = uniqueness_gap(a, b);
    EXPECT_TRUE(rep.passed(1e-6)) << rep.final_gap();
}

TEST(Uniqueness, DifferentGridsRejected) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.05;
    SolveConfig other(RadialGrid::uniform(0.0, 12.0, 60, 5));
    other.dt = 0.05;
    const auto a = continue_to_blowup(bump(cfg.grid), 0.0, 0.2, zero_source, cfg);
    const auto b = continue_to_blowup(bump(other.grid), 0.0, 0.2, zero_source, other);
    EXPECT_THROW(uniqueness_gap(a, b), InvalidInput);
}

TEST(GradientKernel, RatioStaysBelowConstant) {
    const auto g = RadialGrid::uniform(0.0, 10.0, 500, 5);
    std::vector<double> f(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) f[i] = g[i] < 1.0 ? 1.0 : 0.0;
    const double C = gradient_kernel_constant(5);
    double lo = 1e300, hi = 0.0;
    for (double delta : {0.4, 0.1, 0.025}) {
        const double q = gradient_kernel_ratio(g, f, delta);
        EXPECT_LE(q, C);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    EXPECT_LT(hi / lo, 2.0);
}

TEST(Lipschitz, FiniteOnTube) {
    const auto F = coupled_source(5);
    const double L = lipschitz_estimate(grid5(), F, 2.0, 0.1);
    EXPECT_GT(L, 0.0);
    EXPECT_LE(L, 0.5 + 0.4 + 1e-9);
}

TEST(Determinism, IndependentOfThreadCount) {
    SolveConfig cfg(grid5());
    cfg.dt = 0.01;
    const auto u0 = bump(cfg.grid);
    parallel::set_threads(1);
    const auto a = continue_to_blowup(u0, 0.0, 0.5, coupled_source(5), cfg);
    parallel::set_threads(4);
    const auto b = continue_to_blowup(u0, 0.0, 0.5, coupled_source(5), cfg);
    ASSERT_EQ(a.values.size(), b.values.size());
    for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_EQ(a.values[k], b.values[k]);
}
