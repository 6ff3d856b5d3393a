#pragma once

// Radial harmonic map flow phi_t(r, theta) = (r e^{rho~(r, t)}, theta). The
// n-dimensional radial equation
//   rho~_t = rho~_rr + ((n+1)/r) rho~_r + drift rho~_r + rho~_r^2 + G(rho~, r^2, t)
// is the radial Laplacian in m = n + 2 dimensions plus the source F, so it is
// solved with the Duhamel solver on an m-dimensional radial grid. A direct
// finite-difference solve of the same 1-D equation is kept as a cross-check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/duhamel_solver.hpp"
#include "hmflow/error.hpp"
#include "hmflow/metric_model.hpp"
#include "hmflow/radial_grid.hpp"
#include "hmflow/radial_kernel.hpp"

namespace hmflow::flow {

/// Extra forcing added to F (manufactured solutions); zero when empty.
using Forcing = std::function<double(double r, double t)>;

struct FlowConfig {
    double r_max = 20.0;
    int intervals = 400;
    double dt = 5e-3;
    double tolerance = 1e-10;
    int max_iterations = 40;
    double norm_ceiling = 1e6;
    double metric_scale = 1.0;            // length over which the metric varies
    solver::WindowPolicy policy;
    std::optional<double> fixed_window;
    solver::GuessPerturbation perturb;     // added to each window's first Picard guess

    RadialGrid grid(int n) const { return RadialGrid::uniform(0.0, r_max, intervals, n + 2); }

    solver::SolveConfig solver_config(int n) const {
        solver::SolveConfig c(grid(n));
        c.dt = dt;
        c.tolerance = tolerance;
        c.max_iterations = max_iterations;
        c.norm_ceiling = norm_ceiling;
        c.metric_scale = metric_scale;
        c.policy = policy;
        return c;
    }
};

struct FlowSolution {
    MetricFamily metric;
    solver::Trajectory trajectory;

    int n() const { return metric.n; }
    double t0() const { return metric.t0; }
    double T0() const { return trajectory.T0; }
    const RadialGrid& grid() const { return trajectory.grid; }
    const std::vector<double>& times() const { return trajectory.times; }
    const std::vector<double>& rho_tilde(std::size_t k) const { return trajectory.values.at(k); }

    /// rho(r, t_k) = r e^{rho~(r, t_k)}.
    std::vector<double> rho(std::size_t k) const {
        const auto& v = rho_tilde(k);
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = grid()[i] * std::exp(v[i]);
        return out;
    }
};

/// Rejects families whose G is unbounded at the origin somewhere on [t0, T].
inline void require_origin_compatible(const MetricFamily& fam, double horizon, int samples = 64) {
    for (int k = 0; k <= samples; ++k) {
        const double t = fam.t0 + (horizon - fam.t0) * k / samples;
        if (!fam.origin_compatible(t)) {
            std::ostringstream os;
            os << "hmflow: metric '" << fam.name << "' has ft(0, t) != ft(0, t0) at t=" << t
               << "; the flow equation is singular at the origin";
            throw DomainError(os.str());
        }
    }
}

inline solver::SourceFn lifted_source(const MetricFamily& fam, const Forcing& extra = {}) {
    if (extra)
        return [fam, extra](double r, double u, double p, double t) {
            return F_eval_closure(fam, r, u, p, t) + extra(r, t);
        };
    return [fam](double r, double u, double p, double t) { return F_eval_closure(fam, r, u, p, t); };
}

/// Solves from rho~(., t0) = 0 up to the horizon or numerical blow-up.
inline FlowSolution solve(const MetricFamily& fam, double horizon, const FlowConfig& cfg, const Forcing& extra = {}) {
    fam.validate();
    HMFLOW_REQUIRE(horizon > fam.t0 && horizon <= fam.horizon, DomainError,
                   "hmflow::solve: need t0 < horizon <= T of the metric family");
    require_origin_compatible(fam, horizon);
    const auto sc = cfg.solver_config(fam.n);
    solver::ContinueOptions opt;
    opt.fixed_window = cfg.fixed_window;
    opt.perturb = cfg.perturb;
    try {
        auto tr = solver::continue_to_blowup(std::vector<double>(sc.grid.size(), 0.0), fam.t0, horizon,
                                             lifted_source(fam, extra), sc, opt);
        return FlowSolution{fam, std::move(tr)};
    } catch (const InvalidInput& e) {
        throw InvalidInput("hmflow[" + fam.name + "]: " + e.what());
    } catch (const DomainError& e) {
        throw DomainError("hmflow[" + fam.name + "]: " + e.what());
    }
}

/// Residual of the flow equation on the solved trajectory.
struct Residual {
    std::vector<double> times;                // interior times t_1 .. t_{K-1}
    std::vector<std::vector<double>> values;  // at grid nodes; the last node is left at 0

    /// sup over all times and nodes with r <= r_cut.
    double sup(const RadialGrid& g, double r_cut) const {
        double s = 0.0;
        for (const auto& v : values)
            for (std::size_t i = 0; i < v.size() && g[i] <= r_cut; ++i) s = std::max(s, std::abs(v[i]));
        return s;
    }
};

namespace detail {

inline double uniform_step(const std::vector<double>& t) {
    HMFLOW_REQUIRE(t.size() >= 3, InvalidInput, "residual: need at least three times");
    const double dt = t[1] - t[0];
    for (std::size_t k = 2; k < t.size(); ++k)
        HMFLOW_REQUIRE(std::abs(t[k] - t[k - 1] - dt) <= 1e-9 * dt, InvalidInput,
                       "residual: trajectory times are not uniform");
    return dt;
}

// u_rr + (m-1)/r u_r on a uniform grid; m u_rr at the origin by symmetry.
inline std::vector<double> radial_laplacian(const RadialGrid& g, std::span<const double> u) {
    const std::size_t n = g.size();
    const int m = g.dimension();
    const double h = g[1] - g[0];
    std::vector<double> L(n, 0.0);
    L[0] = m * 2.0 * (u[1] - u[0]) / (h * h);
    for (std::size_t i = 1; i + 1 < n; ++i)
        L[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h) + (m - 1) / g[i] * (u[i + 1] - u[i - 1]) / (2.0 * h);
    return L;
}

} // namespace detail

/// rho~_t - [rho~_rr + ((n+1)/r) rho~_r + drift rho~_r + rho~_r^2 + G] - extra,
/// centred in time on a uniform time grid, centred in space.
inline Residual residual(const FlowSolution& sol, const Forcing& extra = {}) {
    const auto& t = sol.times();
    const double dt = detail::uniform_step(t);
    const auto& g = sol.grid();
    HMFLOW_REQUIRE(g.is_uniform(), InvalidInput, "residual: grid must be uniform");
    const auto F = lifted_source(sol.metric, extra);
    Residual res;
    for (std::size_t k = 1; k + 1 < t.size(); ++k) {
        const auto& u = sol.rho_tilde(k);
        const auto L = detail::radial_laplacian(g, u);
        const auto p = radial_derivative(g, u);
        std::vector<double> R(g.size(), 0.0);
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            const double ut = (sol.rho_tilde(k + 1)[i] - sol.rho_tilde(k - 1)[i]) / (2.0 * dt);
            R[i] = ut - L[i] - F(g[i], u[i], p[i], t[k]);
        }
        res.times.push_back(t[k]);
        res.values.push_back(std::move(R));
    }
    return res;
}

struct MapPoint {
    double rho;
    std::vector<double> theta;
};

/// phi_t(r, theta) = (rho(r, t), theta), linear in t between stored times.
inline MapPoint map_eval(const FlowSolution& sol, double r, std::span<const double> theta, double t) {
    const auto& times = sol.times();
    HMFLOW_REQUIRE(t >= times.front() - 1e-12 && t <= times.back() + 1e-12, DomainError,
                   "map_eval: t outside the solved range");
    HMFLOW_REQUIRE(r >= 0.0 && r <= sol.grid().back(), DomainError, "map_eval: r outside the grid");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = static_cast<std::size_t>(it - times.begin());
    k = std::clamp<std::size_t>(k, 1, times.size() - 1);
    const double w = (times.size() == 1) ? 0.0 : std::clamp((t - times[k - 1]) / (times[k] - times[k - 1]), 0.0, 1.0);
    const double a = interpolate(sol.grid(), sol.rho_tilde(k - 1), r);
    const double b = interpolate(sol.grid(), sol.rho_tilde(k), r);
    const double rt = (1.0 - w) * a + w * b;
    return {r * std::exp(rt), std::vector<double>(theta.begin(), theta.end())};
}

struct NormCurve {
    std::vector<double> times;
    std::vector<double> norms;  // ||rho~||_inf + ||rho~_r||_inf
};

inline NormCurve norm_monitor(const FlowSolution& sol) { return {sol.times(), sol.trajectory.norms}; }

/// First-order response to the metric: rho_lin = -2 int_{t0}^t e^{(t-s)Laplacian} xi(r^2, s) ds
/// in dimension n + 2, which is the flow linearized at rho~ = 0 when ft does not move.
inline std::vector<double> linearized_response(const MetricFamily& fam, const RadialGrid& g, double t, int steps) {
    const auto xi = [&](double s) {
        std::vector<double> f(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) f[i] = -2.0 * fam.xi(g[i] * g[i], s);
        return f;
    };
    return duhamel_integrate(g, xi, fam.t0, t, steps).values;
}

/// Direct solve of the n-dimensional radial equation by finite differences:
/// Crank-Nicolson for the Laplacian, second-order extrapolation for the source,
/// symmetry at r = 0 and zero slope at r_max.
struct DirectResult {
    RadialGrid grid;
    std::vector<double> times;
    std::vector<std::vector<double>> values;
};

inline DirectResult direct_solve(const MetricFamily& fam, double horizon, const FlowConfig& cfg,
                                 const Forcing& extra = {}) {
    fam.validate();
    require_origin_compatible(fam, horizon);
    const auto g = cfg.grid(fam.n);
    const std::size_t N = g.size();
    const int m = g.dimension();
    const double h = g[1] - g[0];
    const int steps = static_cast<int>(std::lround((horizon - fam.t0) / cfg.dt));
    HMFLOW_REQUIRE(steps >= 1 && std::abs(steps * cfg.dt - (horizon - fam.t0)) <= 1e-9, InvalidInput,
                   "direct_solve: horizon must be a whole number of steps");
    const double dt = cfg.dt;
    const auto F = lifted_source(fam, extra);

    // Tridiagonal Laplacian rows (lo, di, up).
    std::vector<double> lo(N, 0.0), di(N, 0.0), up(N, 0.0);
    di[0] = -2.0 * m / (h * h);
    up[0] = 2.0 * m / (h * h);
    for (std::size_t i = 1; i + 1 < N; ++i) {
        const double c = (m - 1) / (g[i] * 2.0 * h);
        lo[i] = 1.0 / (h * h) - c;
        di[i] = -2.0 / (h * h);
        up[i] = 1.0 / (h * h) + c;
    }
    lo[N - 1] = 2.0 / (h * h);
    di[N - 1] = -2.0 / (h * h);
    auto apply_L = [&](const std::vector<double>& u) {
        std::vector<double> out(N);
        for (std::size_t i = 0; i < N; ++i) {
            double s = di[i] * u[i];
            if (i > 0) s += lo[i] * u[i - 1];
            if (i + 1 < N) s += up[i] * u[i + 1];
            out[i] = s;
        }
        return out;
    };
    auto source = [&](const std::vector<double>& u, double t) {
        const auto p = radial_derivative(g, u);
        std::vector<double> f(N);
        for (std::size_t i = 0; i < N; ++i) f[i] = F(g[i], u[i], p[i], t);
        return f;
    };
    // (I - dt/2 L) solved by the Thomas algorithm.
    std::vector<double> a(N), b(N), c(N);
    for (std::size_t i = 0; i < N; ++i) {
        a[i] = -0.5 * dt * lo[i];
        b[i] = 1.0 - 0.5 * dt * di[i];
        c[i] = -0.5 * dt * up[i];
    }
    auto thomas = [&](std::vector<double> d) {
        std::vector<double> cp(N), x(N);
        cp[0] = c[0] / b[0];
        d[0] /= b[0];
        for (std::size_t i = 1; i < N; ++i) {
            const double den = b[i] - a[i] * cp[i - 1];
            cp[i] = c[i] / den;
            d[i] = (d[i] - a[i] * d[i - 1]) / den;
        }
        x[N - 1] = d[N - 1];
        for (std::size_t i = N - 1; i-- > 0;) x[i] = d[i] - cp[i] * x[i + 1];
        return x;
    };

    DirectResult out{g, {fam.t0}, {std::vector<double>(N, 0.0)}};
    std::vector<double> f_prev;
    for (int k = 0; k < steps; ++k) {
        const double t = fam.t0 + k * dt;
        const auto& u = out.values.back();
        const auto Lu = apply_L(u);
        // Source at the half step: extrapolated from the last two levels, and
        // from a predictor on the first step.
        std::vector<double> fh;
        if (k == 0) {
            auto f0 = source(u, t);
            std::vector<double> pred(N);
            for (std::size_t i = 0; i < N; ++i) pred[i] = u[i] + 0.5 * dt * (Lu[i] + f0[i]);
            fh = source(pred, t + 0.5 * dt);
            f_prev = std::move(f0);
        } else {
            auto f0 = source(u, t);
            fh.resize(N);
            for (std::size_t i = 0; i < N; ++i) fh[i] = 1.5 * f0[i] - 0.5 * f_prev[i];
            f_prev = std::move(f0);
        }
        std::vector<double> rhs(N);
        for (std::size_t i = 0; i < N; ++i) rhs[i] = u[i] + 0.5 * dt * Lu[i] + dt * fh[i];
        auto next = thomas(std::move(rhs));
        for (double x : next)
            if (!std::isfinite(x)) throw BlowupSignal("direct_solve: non-finite state", t + dt);
        out.times.push_back(t + dt);
        out.values.push_back(std::move(next));
    }
    return out;
}

} // namespace hmflow::flow
