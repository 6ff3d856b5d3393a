#pragma once

// Free-space heat kernel and its restriction to radial data.
//
// Conventions: K(r, r'; tau) is the average of Gamma(x, y; tau) over the
// sphere |y| = r' for fixed |x| = r. With this normalization
//
//     (e^{tau Laplacian} v)(r) = int_0^inf K(r, r'; tau) v(r') |S^{m-1}| r'^{m-1} dr'
//
// and K(0, r'; tau) = Gamma evaluated at squared distance r'^2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "hmflow/error.hpp"
#include "hmflow/parallel.hpp"
#include "hmflow/quadrature.hpp"
#include "hmflow/radial_grid.hpp"

namespace hmflow {

struct HeatKernelParams {
    int m = 3;
    double tau = 1.0;

    void validate() const {
        HMFLOW_REQUIRE(m >= 3, DomainError, "heat kernel: dimension must be >= 3");
        HMFLOW_REQUIRE(tau > 0.0 && std::isfinite(tau), DomainError, "heat kernel: tau must be positive");
    }
};

/// Gamma = (4 pi tau)^{-m/2} exp(-|x-y|^2 / (4 tau)).
inline double eval_gamma(double sq_dist, const HeatKernelParams& p) {
    p.validate();
    HMFLOW_REQUIRE(sq_dist >= 0.0, DomainError, "eval_gamma: negative squared distance");
    return std::pow(4.0 * std::numbers::pi * p.tau, -0.5 * p.m) * std::exp(-sq_dist / (4.0 * p.tau));
}

namespace detail {

/// int_0^pi sin^{m-2}(theta) d theta.
inline double sine_power_integral(int m) {
    return std::sqrt(std::numbers::pi) * std::tgamma(0.5 * (m - 1)) / std::tgamma(0.5 * m);
}

inline double int_power(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

inline double angular_panel(double z, int m, double a, double b, int nodes) {
    const quad::Rule& rule = quad::gauss_legendre(nodes);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    double sum = 0.0;
    for (int i = 0; i < nodes; ++i) {
        const double th = mid + half * rule.nodes[i];
        const double s = std::sin(0.5 * th);
        sum += rule.weights[i] * std::exp(-2.0 * z * s * s) * int_power(std::sin(th), m - 2);
    }
    return sum * half;
}

inline double angular_sum(double z, int m, int nodes) {
    const double pi = std::numbers::pi;
    if (z <= 4.0) return angular_panel(z, m, 0.0, pi, nodes);
    // Beyond 2 z sin^2(theta/2) = 44 the weight is below 1e-19 of its peak.
    const double s_max = std::sqrt(22.0 / z);
    const double th_max = s_max >= 1.0 ? pi : 2.0 * std::asin(s_max);
    return angular_panel(z, m, 0.0, th_max, nodes);
}

} // namespace detail

namespace detail {

/// Gauss-Legendre with 64 nodes, doubled until the relative change drops below 1e-12.
inline double angular_average_quadrature(double z, int m) {
    HMFLOW_REQUIRE(z >= 0.0, DomainError, "angular_average: negative argument");
    const double norm = sine_power_integral(m);
    double prev = angular_sum(z, m, 64);
    for (int nodes = 128; nodes <= 1024; nodes *= 2) {
        const double cur = angular_sum(z, m, nodes);
        if (std::abs(cur - prev) <= 1e-12 * std::abs(cur)) return cur / norm;
        prev = cur;
    }
    throw ConvergenceError("angular_average: quadrature did not converge");
}

} // namespace detail

/// Average of exp(-z (1 - cos theta)) against sin^{m-2}(theta) on [0, pi].
inline double angular_average(double z, int m) {
    HMFLOW_REQUIRE(z >= 0.0, DomainError, "angular_average: negative argument");
    if (z == 0.0) return 1.0;
    // With s = 1 - cos(theta) the integral is int_0^2 e^{-zs} (s(2-s))^{(m-3)/2} ds,
    // elementary for m = 3 and m = 5.
    if (m == 3) return -std::expm1(-2.0 * z) / (2.0 * z);
    if (m == 5) {
        if (z >= 2.0) return 3.0 * ((z - 1.0) + (z + 1.0) * std::exp(-2.0 * z)) / (2.0 * z * z * z);
        // 6 sum_n (-2z)^n / (n! (n+2)(n+3)); terms fall below 1e-17 well before n = 40.
        double term = 1.0, sum = 0.0;
        for (int n = 0; n < 40; ++n) {
            sum += term / ((n + 2.0) * (n + 3.0));
            term *= -2.0 * z / (n + 1.0);
        }
        return 6.0 * sum;
    }
    return detail::angular_average_quadrature(z, m);
}

/// Mode-0 (sphere-averaged) free heat kernel K(r, r'; tau).
inline double mode0_kernel(double r, double rp, const HeatKernelParams& p) {
    p.validate();
    HMFLOW_REQUIRE(r >= 0.0 && rp >= 0.0, DomainError, "mode0_kernel: radii must be nonnegative");
    const double gap = (r - rp) * (r - rp) / (4.0 * p.tau);
    if (gap > 700.0) return 0.0;
    const double pref = std::pow(4.0 * std::numbers::pi * p.tau, -0.5 * p.m) * std::exp(-gap);
    if (pref == 0.0) return 0.0;
    return pref * angular_average(r * rp / (2.0 * p.tau), p.m);
}

/// Same kernel with the angular integral always done by quadrature.
inline double mode0_kernel_quadrature(double r, double rp, const HeatKernelParams& p) {
    p.validate();
    HMFLOW_REQUIRE(r >= 0.0 && rp >= 0.0, DomainError, "mode0_kernel: radii must be nonnegative");
    const double gap = (r - rp) * (r - rp) / (4.0 * p.tau);
    const double pref = std::pow(4.0 * std::numbers::pi * p.tau, -0.5 * p.m) * std::exp(-gap);
    if (pref == 0.0) return 0.0;
    const double z = r * rp / (2.0 * p.tau);
    return z == 0.0 ? pref : pref * detail::angular_average_quadrature(z, p.m);
}

/// Closed form of the mode-0 kernel in three dimensions.
inline double mode0_kernel_3d_closed_form(double r, double rp, double tau) {
    const double pref = std::pow(4.0 * std::numbers::pi * tau, -1.5);
    if (r == 0.0 || rp == 0.0) return pref * std::exp(-(r + rp) * (r + rp) / (4.0 * tau));
    const double a = std::exp(-(r - rp) * (r - rp) / (4.0 * tau));
    const double b = std::exp(-(r + rp) * (r + rp) / (4.0 * tau));
    return pref * (tau / (r * rp)) * (a - b);
}

/// int_a^b K(r, r'; tau) |S^{m-1}| r'^{m-1} dr' by composite Gauss-Legendre.
inline double kernel_mass_between(double r, double a, double b, const HeatKernelParams& p) {
    if (b <= a) return 0.0;
    const double area = sphere_area(p.m);
    auto f = [&](double rp) { return mode0_kernel(r, rp, p) * area * std::pow(rp, p.m - 1); };
    const double width = 14.0 * std::sqrt(p.tau);
    const double lo = std::max(a, r - width);
    const double hi = std::min(b, r + width);
    if (hi <= lo) return 0.0;
    return quad::integrate_panels(f, lo, hi, 24, 32);
}

/// Total mass of the kernel row; equals 1 up to quadrature error.
inline double kernel_mass(double r, const HeatKernelParams& p) {
    p.validate();
    return kernel_mass_between(r, 0.0, r + 14.0 * std::sqrt(p.tau), p);
}

/// Discretized e^{tau Laplacian} on a radial grid.
///
/// When sqrt(tau) is at least the largest grid spacing, rows are trapezoid
/// collocations of the kernel (spectrally accurate on resolved data).
/// Otherwise the kernel row at r_i is integrated against the local cubic
/// interpolant of the data, which stays consistent when the kernel is
/// narrower than a cell, where collocation falls apart. The grid
/// must start at r = 0. Rows that reach the last node receive the missing
/// kernel mass there, so the field is extended beyond the grid by its boundary
/// value and constants are reproduced exactly. Cells further than
/// sqrt(184 tau) from r_i are dropped (below 1e-20).
class KernelOperator {
public:
    KernelOperator(const RadialGrid& grid, double tau) : grid_(grid), tau_(tau) {
        HeatKernelParams p{grid.dimension(), tau};
        p.validate();
        HMFLOW_REQUIRE(grid.front() == 0.0, InvalidInput, "KernelOperator: grid must start at r = 0");
        const std::size_t n = grid.size();
        const double reach = std::sqrt(46.0 * 4.0 * tau);
        double max_h = 0.0;
        for (std::size_t i = 1; i < n; ++i) max_h = std::max(max_h, grid[i] - grid[i - 1]);
        collocated_ = std::sqrt(tau) >= max_h;
        const auto w = grid.shell_weights();
        lo_.assign(n, 0);
        hi_.assign(n, 0);
        rows_.resize(n);
        parallel::parallel_for(0, n, [&](std::size_t i) {
            const double r = grid[i];
            std::size_t a = i, b = i;
            // Collocation keeps nodes within reach; hat rows keep cells touching it.
            while (a > 0 && r - (collocated_ ? grid[a - 1] : grid[a]) <= reach) --a;
            while (b + 1 < n && (collocated_ ? grid[b + 1] : grid[b]) - r <= reach) ++b;
            const std::size_t cell_lo = a, cell_hi = b;
            if (!collocated_) {
                // Room for the interpolation stencils of the end cells.
                a = (a == 0) ? 0 : a - 1;
                b = std::min(n - 1, std::max(b + 1, std::min<std::size_t>(n - 1, 3)));
                if (b + 1 == n) a = std::min(a, n - 4);
            }
            lo_[i] = a;
            hi_[i] = b + 1;
            auto& row = rows_[i];
            row.assign(b - a + 1, 0.0);
            if (collocated_) {
                for (std::size_t j = a; j <= b; ++j) row[j - a] = mode0_kernel(r, grid[j], p) * w[j];
            } else {
                interpolated_row(grid, p, r, cell_lo, cell_hi, row, a);
            }
            if (hi_[i] == n) {
                double s = 0.0;
                for (double x : row) s += x;
                row.back() += 1.0 - s;
            }
        });
    }

    bool collocated() const noexcept { return collocated_; }
    const RadialGrid& grid() const noexcept { return grid_; }
    double tau() const noexcept { return tau_; }

    void apply(std::span<const double> in, std::span<double> out) const {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& row = rows_[i];
            double s = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * in[lo_[i] + j];
            out[i] = s;
        }
    }

    std::vector<double> apply(std::span<const double> in) const {
        std::vector<double> out(in.size());
        apply(in, out);
        return out;
    }

    /// Sum of row i; the discrete kernel mass seen by a constant field.
    double row_mass(std::size_t i) const {
        double s = 0.0;
        for (double x : rows_[i]) s += x;
        return s;
    }

private:
    // Cell [r_c, r_{c+1}] integrated against the cubic Lagrange interpolant
    // through four neighbouring nodes (mirrored at r = 0, shifted inward at
    // r_max). Exact on cubics, and the identity in the limit tau -> 0.
    static void interpolated_row(const RadialGrid& grid, const HeatKernelParams& p, double r, std::size_t a,
                                 std::size_t b, std::vector<double>& row, std::size_t row_lo) {
        const double panel = 0.25 * std::sqrt(p.tau);
        const double area = sphere_area(p.m);
        const quad::Rule& rule = quad::gauss_legendre(6);
        const std::size_t n = grid.size();
        for (std::size_t c = a; c < b; ++c) {
            std::size_t idx[4];
            double pos[4];
            if (c == 0) {
                idx[0] = 1, idx[1] = 0, idx[2] = 1, idx[3] = 2;
                pos[0] = -grid[1], pos[1] = 0.0, pos[2] = grid[1], pos[3] = grid[2];
            } else {
                const std::size_t s0 = std::min(c - 1, n - 4);
                for (int q = 0; q < 4; ++q) idx[q] = s0 + q, pos[q] = grid[s0 + q];
            }
            const double x0 = grid[c], w = grid[c + 1] - x0;
            const int panels = std::max(1, static_cast<int>(std::ceil(w / panel)));
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            for (int q = 0; q < panels; ++q) {
                const double half = 0.5 * w / panels, mid = x0 + (q + 0.5) * w / panels;
                for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                    const double rp = mid + half * rule.nodes[k];
                    const double f = rule.weights[k] * half * mode0_kernel(r, rp, p) * area * std::pow(rp, p.m - 1);
                    if (f == 0.0) continue;
                    for (int j = 0; j < 4; ++j) {
                        double L = 1.0;
                        for (int l = 0; l < 4; ++l)
                            if (l != j) L *= (rp - pos[l]) / (pos[j] - pos[l]);
                        acc[j] += L * f;
                    }
                }
            }
            for (int j = 0; j < 4; ++j) row[idx[j] - row_lo] += acc[j];
        }
    }

    RadialGrid grid_;
    double tau_;
    bool collocated_ = false;
    std::vector<std::size_t> lo_, hi_;
    std::vector<std::vector<double>> rows_;
};

inline void require_bounded(std::span<const double> v, const char* where) {
    for (double x : v)
        HMFLOW_REQUIRE(std::isfinite(x), InvalidInput, std::string(where) + ": non-finite input");
}

/// Free heat evolution of radial data by time tau.
inline RadialField semigroup_apply(const RadialField& u0, double tau) {
    HMFLOW_REQUIRE(tau > 0.0, DomainError, "semigroup_apply: tau must be positive");
    require_bounded(u0.values, "semigroup_apply");
    KernelOperator op(u0.grid, tau);
    return RadialField(u0.grid, op.apply(u0.values), u0.time + tau);
}

using RadialSource = std::function<std::vector<double>(double s)>;

/// Time path of  D(t_k) = int_{t0}^{t_k} e^{(t_k - s) Laplacian} source(s) ds,  t_k = t0 + k dt.
///
/// Midpoint rule in s; the recursion D_k = P D_{k-1} + dt Q source(t_{k-1/2}) with
/// P = e^{dt Laplacian}, Q = e^{(dt/2) Laplacian} is the midpoint sum written
/// with the semigroup property.
inline std::vector<std::vector<double>> duhamel_path(const RadialGrid& grid, const RadialSource& source, double t0,
                                                     double t, int steps) {
    const std::size_t n = grid.size();
    std::vector<std::vector<double>> path;
    path.emplace_back(n, 0.0);
    if (t <= t0) return path;
    HMFLOW_REQUIRE(steps > 0, InvalidInput, "duhamel_integrate: need at least one step");
    const double dt = (t - t0) / steps;
    KernelOperator full(grid, dt);
    KernelOperator half(grid, 0.5 * dt);
    std::vector<double> tmp(n);
    for (int k = 1; k <= steps; ++k) {
        const auto f = source(t0 + (k - 0.5) * dt);
        HMFLOW_REQUIRE(f.size() == n, InvalidInput, "duhamel_integrate: source size mismatch");
        require_bounded(f, "duhamel_integrate");
        std::vector<double> next = full.apply(path.back());
        half.apply(f, tmp);
        for (std::size_t i = 0; i < n; ++i) next[i] += dt * tmp[i];
        path.push_back(std::move(next));
    }
    return path;
}

inline RadialField duhamel_integrate(const RadialGrid& grid, const RadialSource& source, double t0, double t,
                                     int steps) {
    auto path = duhamel_path(grid, source, t0, t, steps);
    return RadialField(grid, std::move(path.back()), t);
}

/// Richardson estimate of the midpoint-rule error: |D_h - D_{h/2}|_inf / 3.
inline double duhamel_richardson_error(const RadialGrid& grid, const RadialSource& source, double t0, double t,
                                       int steps) {
    const auto coarse = duhamel_integrate(grid, source, t0, t, steps);
    const auto fine = duhamel_integrate(grid, source, t0, t, 2 * steps);
    return sup_gap(coarse.values, fine.values) / 3.0;
}

} // namespace hmflow
