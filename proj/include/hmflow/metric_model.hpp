#pragma once

// Warped-product metric data g(t) = dr^2 + f(r,t)^2 dsigma with
// f(r,t) = r exp(ft(r^2,t)), the target metric at t0 given by ft0 = ft(., t0),
// and the radial speed xi(r^2,t) = (1/r) dr/dt. These feed the drift, the
// nonlinearity G and the source F of the lifted radial equation.

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "hmflow/error.hpp"
#include "hmflow/quadrature.hpp"

namespace hmflow {

using ScalarFn2 = std::function<double(double w, double t)>;

struct MetricFamily {
    std::string name;
    int n = 3;
    double t0 = 0.0;
    double horizon = 1.0;  // T, with 0 < T < (n-1)/2
    ScalarFn2 ft;          // ft(w, t)
    ScalarFn2 ft_w;        // d ft / dw
    ScalarFn2 xi;          // xi(w, t)
    std::optional<ScalarFn2> b_closed;  // B(w, t) = 1/2 int_0^w xi(u, t) du, when known

    void validate() const {
        HMFLOW_REQUIRE(n >= 3, DomainError, "MetricFamily: n must be >= 3");
        HMFLOW_REQUIRE(horizon > 0.0 && horizon < 0.5 * (n - 1), DomainError,
                       "MetricFamily: horizon must satisfy 0 < T < (n-1)/2");
        HMFLOW_REQUIRE(t0 >= 0.0 && t0 < horizon, DomainError, "MetricFamily: need 0 <= t0 < T");
        HMFLOW_REQUIRE(ft && ft_w && xi, InvalidInput, "MetricFamily: missing callables");
    }

    // The target data is the same callable frozen at t0.
    double ft0(double w) const { return ft(w, t0); }
    double ft0_w(double w) const { return ft_w(w, t0); }

    double B(double w, double t) const {
        if (b_closed) return (*b_closed)(w, t);
        HMFLOW_REQUIRE(w >= 0.0, DomainError, "MetricFamily::B: w must be nonnegative");
        if (w == 0.0) return 0.0;
        const int panels = std::max(1, static_cast<int>(std::ceil(w / 0.5)));
        return 0.5 * quad::integrate_panels([&](double u) { return xi(u, t); }, 0.0, w, panels, 32);
    }

    /// G stays bounded at the origin only if ft(0, t) = ft0(0) for all t.
    bool origin_compatible(double t) const { return std::abs(ft(0.0, t) - ft0(0.0)) <= 1e-14; }
};

namespace metric {

inline MetricFamily euclidean(int n = 3, double t0 = 0.0, double horizon = 0.9) {
    MetricFamily f;
    f.name = "euclidean";
    f.n = n;
    f.t0 = t0;
    f.horizon = horizon;
    f.ft = [](double, double) { return 0.0; };
    f.ft_w = [](double, double) { return 0.0; };
    f.xi = [](double, double) { return 0.0; };
    f.b_closed = [](double, double) { return 0.0; };
    f.validate();
    return f;
}

/// ft = a(t) exp(-w), xi = b(t) / (1 + w), with a, b affine in t - t0.
/// Regular at the origin only when a1 = 0.
inline MetricFamily exp_bump(int n, double t0, double horizon, double a0, double a1, double b0, double b1) {
    MetricFamily f;
    f.name = "exp_bump";
    f.n = n;
    f.t0 = t0;
    f.horizon = horizon;
    auto a = [=](double t) { return a0 + a1 * (t - t0); };
    auto b = [=](double t) { return b0 + b1 * (t - t0); };
    f.ft = [=](double w, double t) { return a(t) * std::exp(-w); };
    f.ft_w = [=](double w, double t) { return -a(t) * std::exp(-w); };
    f.xi = [=](double w, double t) { return b(t) / (1.0 + w); };
    f.b_closed = [=](double w, double t) { return 0.5 * b(t) * std::log1p(w); };
    f.validate();
    return f;
}

/// ft = a(t) w exp(-w), xi = b(t) / (1 + w). ft(0, t) = 0, so f(r, t) ~ r at the origin.
inline MetricFamily smooth_bump(int n, double t0, double horizon, double a0, double a1, double b0, double b1) {
    MetricFamily f;
    f.name = "smooth_bump";
    f.n = n;
    f.t0 = t0;
    f.horizon = horizon;
    auto a = [=](double t) { return a0 + a1 * (t - t0); };
    auto b = [=](double t) { return b0 + b1 * (t - t0); };
    f.ft = [=](double w, double t) { return a(t) * w * std::exp(-w); };
    f.ft_w = [=](double w, double t) { return a(t) * (1.0 - w) * std::exp(-w); };
    f.xi = [=](double w, double t) { return b(t) / (1.0 + w); };
    f.b_closed = [=](double w, double t) { return 0.5 * b(t) * std::log1p(w); };
    f.validate();
    return f;
}

/// ft = c(t) w / (1 + w) tends to c(t) as w -> infinity; xi = b(t) exp(-w).
inline MetricFamily cylinder_tail(int n, double t0, double horizon, double c0, double c1, double b0, double b1) {
    MetricFamily f;
    f.name = "cylinder_tail";
    f.n = n;
    f.t0 = t0;
    f.horizon = horizon;
    auto c = [=](double t) { return c0 + c1 * (t - t0); };
    auto b = [=](double t) { return b0 + b1 * (t - t0); };
    f.ft = [=](double w, double t) { return c(t) * w / (1.0 + w); };
    f.ft_w = [=](double w, double t) { return c(t) / ((1.0 + w) * (1.0 + w)); };
    f.xi = [=](double w, double t) { return b(t) * std::exp(-w); };
    f.b_closed = [=](double w, double t) { return 0.5 * b(t) * (-std::expm1(-w)); };
    f.validate();
    return f;
}

} // namespace metric

namespace detail {

inline double drift_unchecked(const MetricFamily& fam, double r, double t) {
    const double w = r * r;
    return (fam.n - 1) * 2.0 * r * fam.ft_w(w, t) - r * fam.xi(w, t);
}

/// G(rho, w, t) for w >= 0. Below w = 1e-6 the quotient (1 - e^D)/w,
/// D = 2 ft0(rho^2) - 2 ft(w, t), is expanded to second order in D with D/w
/// taken from midpoint derivatives, removing the cancellation at the origin.
inline double nonlinearity_unchecked(const MetricFamily& fam, double rho_tilde, double w, double t) {
    const int n = fam.n;
    const double e2 = std::exp(2.0 * rho_tilde);
    const double rho_sq = w * e2;
    const double D = 2.0 * fam.ft0(rho_sq) - 2.0 * fam.ft(w, t);
    double first;
    if (w < 1e-6) {
        const double offset = fam.ft0(0.0) - fam.ft(0.0, t);
        HMFLOW_REQUIRE(std::abs(offset) <= 1e-14, DomainError,
                       "nonlinearity_G: ft(0, t) != ft0(0); G is unbounded at the origin");
        const double d_over_w = 2.0 * (e2 * fam.ft0_w(0.5 * rho_sq) - fam.ft_w(0.5 * w, t));
        first = -(n - 1) * d_over_w * (1.0 + 0.5 * D + D * D / 6.0);
    } else {
        first = -(n - 1) * std::expm1(D) / w;
    }
    return first + 2.0 * (n - 1) * fam.ft_w(w, t) - 2.0 * (n - 1) * std::exp(D + 2.0 * rho_tilde) * fam.ft0_w(rho_sq) -
           2.0 * fam.xi(w, t);
}

} // namespace detail

/// (n-1) d ft/dr - r xi, with d ft/dr = 2 r d_w ft(r^2, t).
inline double drift_coefficient(const MetricFamily& fam, double r, double t) {
    HMFLOW_REQUIRE(r > 0.0, DomainError, "drift_coefficient: r must be positive");
    return detail::drift_unchecked(fam, r, t);
}

inline double nonlinearity_G(const MetricFamily& fam, double rho_tilde, double w, double t) {
    HMFLOW_REQUIRE(w > 0.0, DomainError, "nonlinearity_G: w must be positive");
    return detail::nonlinearity_unchecked(fam, rho_tilde, w, t);
}

/// F = drift * p + p^2 + G(rho, r^2, t); the radial form of the lifted source.
inline double F_eval(const MetricFamily& fam, double r, double rho_tilde, double drho_dr, double t) {
    return drift_coefficient(fam, r, t) * drho_dr + drho_dr * drho_dr + nonlinearity_G(fam, rho_tilde, r * r, t);
}

/// F including the removable point r = 0 (drift vanishes, G by its limit).
inline double F_eval_closure(const MetricFamily& fam, double r, double rho_tilde, double drho_dr, double t) {
    HMFLOW_REQUIRE(r >= 0.0, DomainError, "F_eval: r must be nonnegative");
    return detail::drift_unchecked(fam, r, t) * drho_dr + drho_dr * drho_dr +
           detail::nonlinearity_unchecked(fam, rho_tilde, r * r, t);
}

struct SphereMetricMeta {
    int n = 3;
    double t = 0.0;
};

/// Scalar curvature 1 / (1 - 2t/(n-1)) of the shrinking round sphere h(t).
inline double scalar_curvature_h(const SphereMetricMeta& meta) {
    HMFLOW_REQUIRE(meta.n >= 2, DomainError, "scalar_curvature_h: n must be >= 2");
    HMFLOW_REQUIRE(meta.t >= 0.0 && meta.t < 0.5 * (meta.n - 1), DomainError,
                   "scalar_curvature_h: need 0 <= t < (n-1)/2");
    return 1.0 / (1.0 - 2.0 * meta.t / (meta.n - 1));
}

} // namespace hmflow
