#pragma once

// Mode-0 Green kernels of the ball B_R, the annulus B_R \ B_eps and the
// exterior of B_1, truncated at R_far.
//
// For a source radius r' the complement g(r; r', tau) solves the radial heat
// equation on the domain with Dirichlet data K(boundary, r'; tau), optionally
// ramped on by the mollifier, and zero initial data. Then G = K - g. The
// exterior kernel uses g = 0 at R_far, which is absorbing for G up to the
// exponentially small free kernel there.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/error.hpp"
#include "hmflow/parallel.hpp"
#include "hmflow/radial_grid.hpp"
#include "hmflow/radial_kernel.hpp"

namespace hmflow {

/// eta(tau) = psi(2 tau - 1) / (psi(2 tau - 1) + psi(2 - 2 tau)), psi(x) = e^{-1/x};
/// 0 below 1/2, 1 above 1, smooth and increasing in between. eta_delta(tau) = eta(tau / delta).
struct Mollifier {
    double delta = 1.0;

    static double psi(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }

    static double eta(double tau) {
        if (tau <= 0.5) return 0.0;
        if (tau >= 1.0) return 1.0;
        const double a = psi(2.0 * tau - 1.0);
        const double b = psi(2.0 - 2.0 * tau);
        return a / (a + b);
    }

    void validate() const {
        HMFLOW_REQUIRE(delta > 0.0 && delta <= 1.0, DomainError, "Mollifier: delta must lie in (0, 1]");
    }

    double operator()(double tau) const { return eta(tau / delta); }
};

enum class DomainKind { ball, annulus, exterior };

struct DomainSpec {
    DomainKind kind = DomainKind::ball;
    double inner = 0.0;  // 0 for the ball, eps for the annulus, 1 for the exterior
    double outer = 1.0;  // R, or R_far for the exterior
    int m = 3;

    static DomainSpec ball(double R, int m) { return checked({DomainKind::ball, 0.0, R, m}); }
    static DomainSpec annulus(double eps, double R, int m) { return checked({DomainKind::annulus, eps, R, m}); }
    static DomainSpec exterior(double R_far, int m) { return checked({DomainKind::exterior, 1.0, R_far, m}); }

    void validate() const {
        HMFLOW_REQUIRE(m >= 3, DomainError, "DomainSpec: dimension must be >= 3");
        switch (kind) {
        case DomainKind::ball:
            HMFLOW_REQUIRE(inner == 0.0 && outer > 0.0, DomainError, "DomainSpec: ball needs R > 0");
            break;
        case DomainKind::annulus:
            HMFLOW_REQUIRE(inner > 0.0 && inner < outer, DomainError, "DomainSpec: annulus needs 0 < eps < R");
            break;
        case DomainKind::exterior:
            HMFLOW_REQUIRE(inner == 1.0 && outer >= 10.0, DomainError, "DomainSpec: exterior needs R_far >= 10");
            break;
        }
    }

    bool has_inner_boundary() const { return kind != DomainKind::ball; }
    /// The far sphere of the exterior domain is a truncation, not a boundary of the domain.
    bool has_outer_boundary() const { return kind != DomainKind::exterior; }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        switch (kind) {
        case DomainKind::ball: os << "ball R=" << outer; break;
        case DomainKind::annulus: os << "annulus eps=" << inner << " R=" << outer; break;
        case DomainKind::exterior: os << "exterior R_far=" << outer; break;
        }
        os << " m=" << m;
        return os.str();
    }

private:
    static DomainSpec checked(DomainSpec d) {
        d.validate();
        return d;
    }
};

/// Uniform time steps tau_n = n dt, n = 0..steps; kernel values are kept every
/// store_stride steps, fluxes at every step.
struct TimeAxis {
    double dt = 1e-4;
    int steps = 1;
    int store_stride = 1;

    static TimeAxis make(double dt, double horizon, double store_every) {
        TimeAxis a;
        a.dt = dt;
        a.steps = static_cast<int>(std::lround(horizon / dt));
        a.store_stride = static_cast<int>(std::lround(store_every / dt));
        HMFLOW_REQUIRE(std::abs(a.steps * dt - horizon) <= 1e-9 * horizon, InvalidInput,
                       "TimeAxis: horizon must be a multiple of dt");
        HMFLOW_REQUIRE(a.store_stride > 0 && std::abs(a.store_stride * dt - store_every) <= 1e-9 * store_every,
                       InvalidInput, "TimeAxis: storage interval must be a multiple of dt");
        a.validate();
        return a;
    }

    void validate() const {
        HMFLOW_REQUIRE(dt > 0.0 && std::isfinite(dt), InvalidInput, "TimeAxis: dt must be positive");
        HMFLOW_REQUIRE(steps >= 1 && store_stride >= 1, InvalidInput, "TimeAxis: need steps >= 1");
        HMFLOW_REQUIRE(steps % store_stride == 0, InvalidInput, "TimeAxis: steps must be a multiple of the stride");
    }

    std::size_t stored() const { return static_cast<std::size_t>(steps / store_stride); }
    double stored_time(std::size_t k) const { return static_cast<double>((k + 1) * store_stride) * dt; }
    double step_time(int n) const { return n * dt; }
    double horizon() const { return steps * dt; }

    std::vector<double> times() const {
        std::vector<double> t(stored());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = stored_time(k);
        return t;
    }

    /// Index k with stored_time(k) == tau, or npos.
    std::size_t find_time(double tau) const {
        const long n = std::lround(tau / dt);
        if (n <= 0 || n % store_stride != 0 || std::abs(n * dt - tau) > 1e-9 * std::max(tau, dt))
            return static_cast<std::size_t>(-1);
        const auto k = static_cast<std::size_t>(n / store_stride - 1);
        return k < stored() ? k : static_cast<std::size_t>(-1);
    }

    bool same_as(const TimeAxis& o) const {
        return dt == o.dt && steps == o.steps && store_stride == o.store_stride;
    }
};

enum class Side { inner, outer };

/// G0[k][s][i] = G0(r_i, r'_s; tau_k) on every grid node i for each source node s,
/// plus boundary normal derivatives along the inward normal at every time step.
/// By symmetry flux_*[s][n] is also the normal derivative in the boundary
/// variable for a target at r'_s.
struct KernelTable {
    DomainSpec domain;
    RadialGrid grid;
    TimeAxis axis;
    std::vector<std::size_t> source_nodes;
    std::optional<double> mollifier_delta;
    std::vector<double> values;
    std::vector<double> flux_inner;
    std::vector<double> flux_outer;
    // int_0^{tau_n} of the flux, accumulated over substeps. Boundary pulses from
    // near-boundary sources are narrower than dt, so integrate against these.
    std::vector<double> flux_inner_cum;
    std::vector<double> flux_outer_cum;

    KernelTable(DomainSpec d, RadialGrid g, TimeAxis a, std::vector<std::size_t> sources)
        : domain(d), grid(std::move(g)), axis(a), source_nodes(std::move(sources)) {
        values.assign(axis.stored() * source_nodes.size() * grid.size(), 0.0);
        const std::size_t nf = source_nodes.size() * static_cast<std::size_t>(axis.steps + 1);
        if (domain.has_inner_boundary()) flux_inner.assign(nf, 0.0), flux_inner_cum.assign(nf, 0.0);
        if (domain.has_outer_boundary()) flux_outer.assign(nf, 0.0), flux_outer_cum.assign(nf, 0.0);
    }

    std::size_t nodes() const { return grid.size(); }
    std::size_t sources() const { return source_nodes.size(); }
    std::size_t times() const { return axis.stored(); }
    double source_radius(std::size_t s) const { return grid[source_nodes[s]]; }
    double time(std::size_t k) const { return axis.stored_time(k); }

    double value(std::size_t i, std::size_t s, std::size_t k) const {
        return values[(k * sources() + s) * nodes() + i];
    }
    double& value_ref(std::size_t i, std::size_t s, std::size_t k) {
        return values[(k * sources() + s) * nodes() + i];
    }

    /// G0(., r'_s; tau_k) on the grid.
    std::span<const double> profile(std::size_t s, std::size_t k) const {
        return {values.data() + (k * sources() + s) * nodes(), nodes()};
    }

    std::span<const double> flux_series(Side side, std::size_t s) const {
        const auto& f = side == Side::inner ? flux_inner : flux_outer;
        HMFLOW_REQUIRE(!f.empty(), InvalidInput, "KernelTable: domain has no such boundary");
        const std::size_t len = static_cast<std::size_t>(axis.steps + 1);
        return {f.data() + s * len, len};
    }

    std::span<const double> flux_cumulative(Side side, std::size_t s) const {
        const auto& f = side == Side::inner ? flux_inner_cum : flux_outer_cum;
        HMFLOW_REQUIRE(!f.empty(), InvalidInput, "KernelTable: domain has no such boundary");
        const std::size_t len = static_cast<std::size_t>(axis.steps + 1);
        return {f.data() + s * len, len};
    }

    /// Source index whose radius equals r, or npos.
    std::size_t find_source(double r) const {
        for (std::size_t s = 0; s < sources(); ++s)
            if (std::abs(source_radius(s) - r) <= 1e-12 * std::max(1.0, r)) return s;
        return static_cast<std::size_t>(-1);
    }

    /// Grid node whose radius equals r, or npos.
    std::size_t find_node(double r) const {
        const double h = grid.spacing();
        const long i = std::lround((r - grid.front()) / h);
        if (i < 0 || static_cast<std::size_t>(i) >= nodes()) return static_cast<std::size_t>(-1);
        return std::abs(grid[static_cast<std::size_t>(i)] - r) <= 1e-9 * h ? static_cast<std::size_t>(i)
                                                                           : static_cast<std::size_t>(-1);
    }
};

/// Interior nodes (and the origin) whose radius is an integer multiple of spacing; keeps
/// source sets of nested domains on common radii.
inline std::vector<std::size_t> aligned_sources(const RadialGrid& grid, double spacing) {
    HMFLOW_REQUIRE(spacing > 0.0, InvalidInput, "aligned_sources: spacing must be positive");
    std::vector<std::size_t> out;
    for (std::size_t i = grid.front() == 0.0 ? 0 : 1; i + 1 < grid.size(); ++i) {
        const double q = grid[i] / spacing;
        if (std::abs(q - std::round(q)) <= 1e-9) out.push_back(i);
    }
    return out;
}

namespace detail {

/// Free kernel with a cheap cutoff where it is below e^{-60} of the prefactor.
inline double kernel_or_zero(double r, double rp, const HeatKernelParams& p) {
    const double d = r - rp;
    if (d * d > 240.0 * p.tau) return 0.0;
    return mode0_kernel(r, rp, p);
}

/// Conservative second-order discretization of u_rr + (m-1)/r u_r on a uniform grid:
///   L u_i = [w_{i+1/2}(u_{i+1} - u_i) - w_{i-1/2}(u_i - u_{i-1})] / (h^2 r_i^{m-1}),  w = r^{m-1},
/// and L u_0 = 2m (u_1 - u_0) / h^2 at the origin (cell [0, h/2]).
/// Unknowns are nodes [lo, hi]; nodes lo-1 (if any) and hi+1 carry Dirichlet data.
class RadialHeatStepper {
public:
    RadialHeatStepper(const RadialGrid& grid, bool origin, double dt) : dt_(dt) {
        HMFLOW_REQUIRE(grid.is_uniform(), InvalidInput, "Green kernel: solver grid must be uniform");
        const int m = grid.dimension();
        const double h = grid.spacing();
        lo_ = origin ? 0 : 1;
        hi_ = grid.size() - 2;
        const std::size_t u = hi_ - lo_ + 1;
        alpha_.resize(u);
        beta_.resize(u);
        for (std::size_t k = 0; k < u; ++k) {
            const double r = grid[lo_ + k];
            if (r == 0.0) {
                alpha_[k] = 0.0;
                beta_[k] = 2.0 * m / (h * h);
            } else {
                alpha_[k] = std::pow((r - 0.5 * h) / r, m - 1) / (h * h);
                beta_[k] = std::pow((r + 0.5 * h) / r, m - 1) / (h * h);
            }
        }
        // A = I - (dt/2) L serves both the Crank-Nicolson step and the implicit Euler half steps.
        const double c = 0.5 * dt_;
        cp_.resize(u);
        inv_.resize(u);
        double prev_cp = 0.0;
        for (std::size_t k = 0; k < u; ++k) {
            const double sub = k > 0 ? -c * alpha_[k] : 0.0;
            const double diag = 1.0 + c * (alpha_[k] + beta_[k]);
            const double sup = -c * beta_[k];
            const double den = diag - sub * prev_cp;
            inv_[k] = 1.0 / den;
            cp_[k] = sup * inv_[k];
            prev_cp = cp_[k];
        }
    }

    std::size_t lo() const { return lo_; }
    std::size_t hi() const { return hi_; }

    /// u holds all grid nodes; u[lo-1] and u[hi+1] are boundary values at the old time.
    void crank_nicolson(std::vector<double>& u, double left_new, double right_new, std::vector<double>& work) const {
        const double c = 0.5 * dt_;
        const std::size_t n = alpha_.size();
        work.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = lo_ + k;
            const double left = alpha_[k] != 0.0 ? u[i - 1] : 0.0;
            work[k] = u[i] + c * (alpha_[k] * left - (alpha_[k] + beta_[k]) * u[i] + beta_[k] * u[i + 1]);
        }
        finish(u, left_new, right_new, work);
    }

    /// Implicit Euler over dt/2.
    void euler_half(std::vector<double>& u, double left_new, double right_new, std::vector<double>& work) const {
        const std::size_t n = alpha_.size();
        work.resize(n);
        for (std::size_t k = 0; k < n; ++k) work[k] = u[lo_ + k];
        finish(u, left_new, right_new, work);
    }

private:
    void finish(std::vector<double>& u, double left_new, double right_new, std::vector<double>& d) const {
        const double c = 0.5 * dt_;
        const std::size_t n = d.size();
        if (lo_ > 0) d[0] += c * alpha_[0] * left_new;
        d[n - 1] += c * beta_[n - 1] * right_new;
        // Thomas sweep with the stored factorization.
        double prev = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double sub = k > 0 ? -c * alpha_[k] : 0.0;
            d[k] = (d[k] - sub * prev) * inv_[k];
            prev = d[k];
        }
        for (std::size_t k = n - 1; k-- > 0;) d[k] -= cp_[k] * d[k + 1];
        for (std::size_t k = 0; k < n; ++k) u[lo_ + k] = d[k];
        if (lo_ > 0) u[lo_ - 1] = left_new;
        u[hi_ + 1] = right_new;
    }

    double dt_;
    std::size_t lo_ = 0, hi_ = 0;
    std::vector<double> alpha_, beta_, cp_, inv_;
};

inline KernelTable build_kernel(const DomainSpec& domain, const RadialGrid& grid, const TimeAxis& axis,
                                std::vector<std::size_t> sources, const std::optional<Mollifier>& mollifier) {
    domain.validate();
    axis.validate();
    HMFLOW_REQUIRE(grid.dimension() == domain.m, InvalidInput, "Green kernel: grid dimension differs from domain");
    HMFLOW_REQUIRE(std::abs(grid.front() - domain.inner) <= 1e-12 && std::abs(grid.back() - domain.outer) <= 1e-12,
                   InvalidInput, "Green kernel: grid must span the domain exactly");
    HMFLOW_REQUIRE(grid.size() >= 8, InvalidInput, "Green kernel: grid too coarse");
    if (mollifier) mollifier->validate();
    const double h = grid.spacing();
    if (domain.kind == DomainKind::annulus)
        HMFLOW_REQUIRE(domain.inner >= 4.0 * h, InvalidInput,
                       "build_annulus_kernel: eps must span at least 4 grid cells");
    if (sources.empty()) sources = aligned_sources(grid, 8.0 * h);
    const bool origin = domain.kind == DomainKind::ball;
    for (std::size_t s : sources)
        HMFLOW_REQUIRE((origin || s > 0) && s + 1 < grid.size(), InvalidInput,
                       "Green kernel: sources must be interior nodes");

    KernelTable table(domain, grid, axis, std::move(sources));
    if (mollifier) table.mollifier_delta = mollifier->delta;
    // Boundary data of sources near a boundary is a pulse in tau of width ~ d^2/(2m),
    // far below dt for the nearest sources. Macro step [tau_a, tau_a + dt] is split into
    // 2^k substeps with 2^k >= 16 dt / tau_a (at most 2^8), so substeps stay below tau/16.
    constexpr int max_level = 8;
    std::vector<RadialHeatStepper> steppers;
    for (int k = 0; k <= max_level; ++k) steppers.emplace_back(grid, origin, std::ldexp(axis.dt, -k));
    auto level_for = [&](int n) {
        const double tau_a = axis.step_time(n - 1);
        int k = 0;
        while (k < max_level && std::ldexp(1.0, k) * tau_a < 16.0 * axis.dt) ++k;
        return k;
    };
    const std::size_t N = grid.size();
    const int m = domain.m;

    parallel::parallel_for(0, table.sources(), [&](std::size_t s) {
        const double rp = table.source_radius(s);
        auto ramp = [&](double tau) { return mollifier ? (*mollifier)(tau) : 1.0; };
        auto left_data = [&](double tau) {
            return origin ? 0.0 : ramp(tau) * kernel_or_zero(grid.front(), rp, {m, tau});
        };
        auto right_data = [&](double tau) {
            return domain.has_outer_boundary() ? ramp(tau) * kernel_or_zero(grid.back(), rp, {m, tau}) : 0.0;
        };
        std::vector<double> g(N, 0.0), work;
        const std::size_t flux_len = static_cast<std::size_t>(axis.steps + 1);

        // The free part is differentiated off-grid: at early times its width is
        // comparable to h and a grid stencil gets the sign wrong. Only the smooth
        // complement goes through the one-sided stencil.
        auto kernel_dr = [&](double r, const HeatKernelParams& p) {
            const double e = 1e-4 * std::sqrt(p.tau);
            return (kernel_or_zero(r + e, rp, p) - kernel_or_zero(r - e, rp, p)) / (2.0 * e);
        };
        auto flux_now = [&](double tau) {
            const HeatKernelParams p{m, tau};
            std::pair<double, double> f{0.0, 0.0};
            if (domain.has_inner_boundary())
                f.first = kernel_dr(grid[0], p) - (4.0 * g[1] - g[2] - 3.0 * g[0]) / (2.0 * h);
            if (domain.has_outer_boundary())
                f.second = -kernel_dr(grid[N - 1], p) - (4.0 * g[N - 2] - g[N - 3] - 3.0 * g[N - 1]) / (2.0 * h);
            return f;
        };
        std::pair<double, double> f_prev{0.0, 0.0}, cum{0.0, 0.0};
        double tau_prev = 0.0;
        auto accumulate = [&](double tau) {
            const auto f = flux_now(tau);
            cum.first += 0.5 * (tau - tau_prev) * (f.first + f_prev.first);
            cum.second += 0.5 * (tau - tau_prev) * (f.second + f_prev.second);
            f_prev = f;
            tau_prev = tau;
        };
        auto record = [&](int n) {
            const double tau = axis.step_time(n);
            const HeatKernelParams p{m, tau};
            const std::size_t at = s * flux_len + static_cast<std::size_t>(n);
            if (domain.has_outer_boundary()) {
                table.flux_outer[at] = f_prev.second;
                table.flux_outer_cum[at] = cum.second;
            }
            if (domain.has_inner_boundary()) {
                table.flux_inner[at] = f_prev.first;
                table.flux_inner_cum[at] = cum.first;
            }
            if (n % axis.store_stride == 0) {
                const std::size_t k = static_cast<std::size_t>(n / axis.store_stride - 1);
                for (std::size_t i = 0; i < N; ++i) table.value_ref(i, s, k) = kernel_or_zero(grid[i], rp, p) - g[i];
            }
        };

        // Rannacher start: two implicit Euler half steps, then Crank-Nicolson.
        const double dt = axis.dt;
        for (int n = 1; n <= axis.steps; ++n) {
            const int k = level_for(n);
            const auto& st = steppers[static_cast<std::size_t>(k)];
            const double sub = std::ldexp(dt, -k);
            const double tau_a = axis.step_time(n - 1);
            for (int q = 1; q <= (1 << k); ++q) {
                const double tau = q == (1 << k) ? axis.step_time(n) : tau_a + q * sub;
                if (n == 1 && q == 1) {
                    st.euler_half(g, left_data(0.5 * sub), right_data(0.5 * sub), work);
                    accumulate(0.5 * sub);
                    st.euler_half(g, left_data(sub), right_data(sub), work);
                } else {
                    st.crank_nicolson(g, left_data(tau), right_data(tau), work);
                }
                accumulate(tau);
            }
            record(n);
        }
        for (double x : g)
            if (!std::isfinite(x)) {
                std::ostringstream os;
                os << "Green kernel: non-finite complement for source r'=" << rp << " (dt=" << dt << ", h=" << h
                   << ", dt/h^2=" << dt / (h * h) << ")";
                throw ConvergenceError(os.str());
            }
    });
    return table;
}

} // namespace detail

/// G_R = Gamma - g_R in mode 0. With a mollifier this is the ramped family G_R^delta.
inline KernelTable build_ball_kernel(double R, int m, const RadialGrid& grid, const TimeAxis& axis,
                                     std::vector<std::size_t> sources = {},
                                     const std::optional<Mollifier>& mollifier = std::nullopt) {
    return detail::build_kernel(DomainSpec::ball(R, m), grid, axis, std::move(sources), mollifier);
}

inline KernelTable build_annulus_kernel(double eps, double R, int m, const RadialGrid& grid, const TimeAxis& axis,
                                        const std::optional<Mollifier>& mollifier = std::nullopt,
                                        std::vector<std::size_t> sources = {}) {
    return detail::build_kernel(DomainSpec::annulus(eps, R, m), grid, axis, std::move(sources), mollifier);
}

inline KernelTable build_exterior_kernel(double R_far, int m, const RadialGrid& grid, const TimeAxis& axis,
                                         std::vector<std::size_t> sources = {}) {
    return detail::build_kernel(DomainSpec::exterior(R_far, m), grid, axis, std::move(sources), std::nullopt);
}

/// Uniform solver grid spanning a domain with spacing h (which must divide it).
inline RadialGrid domain_grid(const DomainSpec& d, double h) {
    const double span = d.outer - d.inner;
    const long n = std::lround(span / h);
    HMFLOW_REQUIRE(n >= 8 && std::abs(n * h - span) <= 1e-9 * span, InvalidInput,
                   "domain_grid: spacing must divide the domain");
    return RadialGrid::uniform(d.inner, d.outer, static_cast<int>(n), d.m);
}

struct FluxArrays {
    Side side;
    std::vector<double> radii;  // source radii
    std::vector<double> times;  // step times
    std::vector<std::vector<double>> values;
};

/// Inward normal derivative of G at one boundary sphere, one row per source radius.
inline FluxArrays flux(const KernelTable& table, Side side) {
    FluxArrays out{side, {}, {}, {}};
    for (int n = 0; n <= table.axis.steps; ++n) out.times.push_back(table.axis.step_time(n));
    for (std::size_t s = 0; s < table.sources(); ++s) {
        out.radii.push_back(table.source_radius(s));
        const auto f = table.flux_series(side, s);
        out.values.emplace_back(f.begin(), f.end());
    }
    return out;
}

} // namespace hmflow
