#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hmflow/error.hpp"

namespace hmflow {

/// Surface area |S^{m-1}| of the unit sphere in R^m.
inline double sphere_area(int m) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m);
}

/// Discretization of r = |x| in R^m.
class RadialGrid {
public:
    RadialGrid(std::vector<double> radii, int dimension) : radii_(std::move(radii)), m_(dimension) {
        HMFLOW_REQUIRE(m_ >= 3, DomainError, "RadialGrid: dimension must be >= 3");
        HMFLOW_REQUIRE(radii_.size() >= 16, InvalidInput, "RadialGrid: need at least 16 nodes");
        HMFLOW_REQUIRE(radii_.front() >= 0.0, InvalidInput, "RadialGrid: radii must be nonnegative");
        for (std::size_t i = 1; i < radii_.size(); ++i)
            HMFLOW_REQUIRE(radii_[i] > radii_[i - 1], InvalidInput, "RadialGrid: radii must increase strictly");
        uniform_ = true;
        const double h = radii_[1] - radii_[0];
        for (std::size_t i = 2; i < radii_.size() && uniform_; ++i)
            uniform_ = std::abs((radii_[i] - radii_[i - 1]) - h) <= 1e-12 * std::max(1.0, radii_.back());
    }

    /// N+1 equispaced nodes on [a, b].
    static RadialGrid uniform(double a, double b, int intervals, int dimension) {
        HMFLOW_REQUIRE(b > a && intervals > 0, InvalidInput, "RadialGrid::uniform: empty interval");
        std::vector<double> r(intervals + 1);
        for (int i = 0; i <= intervals; ++i) r[i] = a + (b - a) * i / intervals;
        r.back() = b;
        return RadialGrid(std::move(r), dimension);
    }

    /// Geometric spacing from r_min up to r_switch, then uniform to r_max.
    /// Resolves r^{2-m} profiles near the origin.
    static RadialGrid graded(double r_min, double r_switch, double r_max, int geometric_nodes, int uniform_intervals,
                             int dimension) {
        HMFLOW_REQUIRE(0.0 < r_min && r_min < r_switch && r_switch < r_max, InvalidInput,
                       "RadialGrid::graded: need 0 < r_min < r_switch < r_max");
        std::vector<double> r;
        const double q = std::pow(r_switch / r_min, 1.0 / std::max(1, geometric_nodes - 1));
        for (int i = 0; i < geometric_nodes - 1; ++i) r.push_back(r_min * std::pow(q, i));
        for (int i = 0; i <= uniform_intervals; ++i)
            r.push_back(r_switch + (r_max - r_switch) * i / uniform_intervals);
        return RadialGrid(std::move(r), dimension);
    }

    std::span<const double> radii() const noexcept { return radii_; }
    double operator[](std::size_t i) const noexcept { return radii_[i]; }
    std::size_t size() const noexcept { return radii_.size(); }
    int dimension() const noexcept { return m_; }
    bool is_uniform() const noexcept { return uniform_; }
    double spacing() const noexcept { return radii_[1] - radii_[0]; }
    double front() const noexcept { return radii_.front(); }
    double back() const noexcept { return radii_.back(); }

    /// Trapezoid weights for integrals  int f(r) r^{m-1} |S^{m-1}| dr  over the grid span.
    std::vector<double> shell_weights() const {
        const std::size_t n = radii_.size();
        std::vector<double> w(n, 0.0);
        const double area = sphere_area(m_);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double h = radii_[i + 1] - radii_[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        for (std::size_t i = 0; i < n; ++i) w[i] *= area * std::pow(radii_[i], m_ - 1);
        return w;
    }

    bool same_as(const RadialGrid& other) const {
        return m_ == other.m_ && radii_ == other.radii_;
    }

private:
    std::vector<double> radii_;
    int m_;
    bool uniform_ = false;
};

/// Samples of a radially symmetric function on a grid at one time.
struct RadialField {
    RadialGrid grid;
    std::vector<double> values;
    double time = 0.0;

    RadialField(RadialGrid g, std::vector<double> v, double t = 0.0)
        : grid(std::move(g)), values(std::move(v)), time(t) {
        HMFLOW_REQUIRE(values.size() == grid.size(), InvalidInput, "RadialField: size mismatch");
    }

    static RadialField constant(const RadialGrid& g, double c, double t = 0.0) {
        return RadialField(g, std::vector<double>(g.size(), c), t);
    }

    template <class F>
    static RadialField sample(const RadialGrid& g, F&& f, double t = 0.0) {
        std::vector<double> v(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g[i]);
        return RadialField(g, std::move(v), t);
    }

    bool finite() const {
        return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
    }
};

inline double sup_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

inline double sup_gap(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

/// Second-order radial derivative of grid samples of a radial function.
/// At r = 0 the derivative vanishes by symmetry; interior nodes use the
/// three-point formula for (possibly non-uniform) spacing; the last node is one-sided.
inline std::vector<double> radial_derivative(const RadialGrid& grid, std::span<const double> u) {
    const std::size_t n = grid.size();
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double hm = grid[i] - grid[i - 1];
        const double hp = grid[i + 1] - grid[i];
        d[i] = (-hp * hp * u[i - 1] + (hp * hp - hm * hm) * u[i] + hm * hm * u[i + 1]) / (hm * hp * (hm + hp));
    }
    {
        const double h1 = grid[1] - grid[0];
        const double h2 = grid[2] - grid[1];
        if (grid[0] == 0.0) {
            d[0] = 0.0;
        } else {
            const double a = -(2 * h1 + h2) / (h1 * (h1 + h2));
            const double b = (h1 + h2) / (h1 * h2);
            const double c = -h1 / (h2 * (h1 + h2));
            d[0] = a * u[0] + b * u[1] + c * u[2];
        }
    }
    {
        const double h1 = grid[n - 1] - grid[n - 2];
        const double h2 = grid[n - 2] - grid[n - 3];
        const double a = (2 * h1 + h2) / (h1 * (h1 + h2));
        const double b = -(h1 + h2) / (h1 * h2);
        const double c = h1 / (h2 * (h1 + h2));
        d[n - 1] = a * u[n - 1] + b * u[n - 2] + c * u[n - 3];
    }
    return d;
}

/// ||u||_inf + ||u_r||_inf on the grid.
inline double c1_norm(const RadialGrid& grid, std::span<const double> u) {
    const auto du = radial_derivative(grid, u);
    return sup_norm(u) + sup_norm(du);
}

/// Linear interpolation of grid samples; throws outside the grid span.
inline double interpolate(const RadialGrid& grid, std::span<const double> u, double r) {
    const auto radii = grid.radii();
    HMFLOW_REQUIRE(r >= radii.front() - 1e-14 && r <= radii.back() + 1e-14, DomainError,
                   "interpolate: r outside grid span");
    auto it = std::upper_bound(radii.begin(), radii.end(), r);
    std::size_t j = static_cast<std::size_t>(it - radii.begin());
    if (j == 0) j = 1;
    if (j >= radii.size()) j = radii.size() - 1;
    const double w = (r - radii[j - 1]) / (radii[j] - radii[j - 1]);
    return (1.0 - w) * u[j - 1] + w * u[j];
}

} // namespace hmflow
