#pragma once

// Checks on Green tables: sign, ordering under domain inclusion and mollifier
// width, symmetry, mass loss, limits eps -> 0 and delta -> 0, scaling, and
// Gaussian envelopes of kernels and boundary fluxes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/green_radial.hpp"
#include "hmflow/report.hpp"

namespace hmflow::green {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

/// Axis-aligned sub-cylinder of the table: lo <= r, r' <= hi and tau >= tau_min.
struct Window {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double tau_min = 0.0;

    bool contains(double r, double rp, double tau) const {
        return r >= lo - 1e-12 && r <= hi + 1e-12 && rp >= lo - 1e-12 && rp <= hi + 1e-12 && tau >= tau_min - 1e-12;
    }
};

inline double table_sup(const KernelTable& t) {
    double s = 0.0;
    for (double v : t.values) s = std::max(s, std::abs(v));
    return s;
}

/// Visits every (i, s, k) of a table inside a window.
template <class F>
void for_each_entry(const KernelTable& t, const Window& w, F&& f) {
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t s = 0; s < t.sources(); ++s)
            for (std::size_t i = 0; i < t.nodes(); ++i)
                if (w.contains(t.grid[i], t.source_radius(s), t.time(k))) f(i, s, k);
}

/// G0 >= -tol.
inline Check check_nonnegative(const KernelTable& t, double tol = 1e-6) {
    double worst = 0.0;
    for (double v : t.values) worst = std::max(worst, -v);
    return Check::at_most("nonnegative " + t.domain.describe(), worst, tol, "max of -G0");
}

/// G0 <= K + tol, i.e. the complement is nonnegative.
inline Check check_below_free(const KernelTable& t, double tol = 1e-6) {
    double worst = 0.0;
    const int m = t.domain.m;
    for_each_entry(t, {}, [&](std::size_t i, std::size_t s, std::size_t k) {
        const double K = detail::kernel_or_zero(t.grid[i], t.source_radius(s), {m, t.time(k)});
        worst = std::max(worst, t.value(i, s, k) - K);
    });
    return Check::at_most("below free kernel " + t.domain.describe(), worst, tol, "max of G0 - K");
}

/// Unmollified kernels vanish on the Dirichlet spheres.
inline Check check_dirichlet_rows(const KernelTable& t, double tol = 1e-12) {
    double worst = 0.0;
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t s = 0; s < t.sources(); ++s) {
            if (t.domain.has_outer_boundary()) worst = std::max(worst, std::abs(t.value(t.nodes() - 1, s, k)));
            if (t.domain.has_inner_boundary()) worst = std::max(worst, std::abs(t.value(0, s, k)));
        }
    return Check::at_most("Dirichlet rows " + t.domain.describe(), worst, tol);
}

/// |G0(r_a, r_b) - G0(r_b, r_a)| over source pairs at least `margin` from the
/// boundary spheres, relative to the table sup.
inline Check check_symmetry(const KernelTable& t, double tol = 1e-5, double margin = -1.0) {
    if (margin < 0.0) margin = 0.1 * (t.domain.outer - t.domain.inner);
    auto far = [&](double r) {
        const bool inner_ok = t.domain.kind == DomainKind::ball || r - t.domain.inner >= margin - 1e-12;
        const bool outer_ok = !t.domain.has_outer_boundary() || t.domain.outer - r >= margin - 1e-12;
        return inner_ok && outer_ok;
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t a = 0; a < t.sources(); ++a)
            for (std::size_t b = a + 1; b < t.sources(); ++b) {
                if (!far(t.source_radius(a)) || !far(t.source_radius(b))) continue;
                const double x = t.value(t.source_nodes[b], a, k);
                const double y = t.value(t.source_nodes[a], b, k);
                worst = std::max(worst, std::abs(x - y));
            }
    const double sup = table_sup(t);
    std::ostringstream os;
    os << "absolute " << worst << ", margin " << margin;
    return Check::at_most("symmetry " + t.domain.describe(), sup > 0 ? worst / sup : 0.0, tol, os.str());
}

/// All boundary fluxes >= -tol.
inline Check check_flux_nonnegative(const KernelTable& t, double tol = 1e-6) {
    double worst = 0.0;
    for (double v : t.flux_inner) worst = std::max(worst, -v);
    for (double v : t.flux_outer) worst = std::max(worst, -v);
    return Check::at_most("flux nonnegative " + t.domain.describe(), worst, tol, "max of -flux");
}

/// Kernel mass int G0(r, r') |S| r^{m-1} dr for each source and stored time.
inline std::vector<std::vector<double>> kernel_mass(const KernelTable& t) {
    const auto w = t.grid.shell_weights();
    std::vector<std::vector<double>> mass(t.sources(), std::vector<double>(t.times(), 0.0));
    for (std::size_t s = 0; s < t.sources(); ++s)
        for (std::size_t k = 0; k < t.times(); ++k) {
            const auto p = t.profile(s, k);
            double sum = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) sum += w[i] * p[i];
            mass[s][k] = sum;
        }
    return mass;
}

/// Mass lost through Dirichlet boundaries: mass <= 1 and nonincreasing in tau.
/// Only meaningful once the kernel is resolved on the grid, so times below
/// tau_min are skipped.
inline Check check_conservation_defect(const KernelTable& t, double tau_min, double tol = 1e-6) {
    const auto mass = kernel_mass(t);
    double worst = 0.0;
    for (std::size_t s = 0; s < t.sources(); ++s) {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < t.times(); ++k) {
            if (t.time(k) < tau_min - 1e-12) continue;
            worst = std::max(worst, mass[s][k] - 1.0);
            worst = std::max(worst, mass[s][k] - prev);
            prev = mass[s][k];
        }
    }
    return Check::at_most("mass defect " + t.domain.describe(), worst, tol, "max excess over 1 or increase in tau");
}

/// sup over shared entries (same node radius, source radius, time) of lower - upper.
inline double ordering_violation(const KernelTable& lower, const KernelTable& upper, const Window& w = {},
                                 std::size_t* compared = nullptr) {
    HMFLOW_REQUIRE(lower.axis.same_as(upper.axis), InvalidInput, "ordering: tables need the same time axis");
    HMFLOW_REQUIRE(lower.domain.m == upper.domain.m, InvalidInput, "ordering: dimension mismatch");
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    for (std::size_t s = 0; s < lower.sources(); ++s) {
        const std::size_t su = upper.find_source(lower.source_radius(s));
        if (su == npos) continue;
        for (std::size_t i = 0; i < lower.nodes(); ++i) {
            const std::size_t iu = upper.find_node(lower.grid[i]);
            if (iu == npos) continue;
            for (std::size_t k = 0; k < lower.times(); ++k) {
                if (!w.contains(lower.grid[i], lower.source_radius(s), lower.time(k))) continue;
                worst = std::max(worst, lower.value(i, s, k) - upper.value(iu, su, k));
                ++count;
            }
        }
    }
    if (compared) *compared = count;
    HMFLOW_REQUIRE(count > 0, InvalidInput, "ordering: tables share no entries");
    return worst;
}

inline Check check_ordering(const std::string& name, const KernelTable& lower, const KernelTable& upper,
                            double tol = 1e-6, const Window& w = {}) {
    std::size_t n = 0;
    const double v = ordering_violation(lower, upper, w, &n);
    return Check::at_most(name, std::max(0.0, v), tol, std::to_string(n) + " shared entries");
}

/// G0 <= K on every entry.
inline Check check_free_bound(const std::string& name, const KernelTable& t, double tol = 1e-6) {
    auto c = check_below_free(t, tol);
    c.name = name;
    return c;
}

/// sup |a - b| over shared entries inside the window.
inline double sup_difference(const KernelTable& a, const KernelTable& b, const Window& w = {}) {
    HMFLOW_REQUIRE(a.axis.same_as(b.axis), InvalidInput, "sup_difference: tables need the same time axis");
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < a.sources(); ++s) {
        const std::size_t sb = b.find_source(a.source_radius(s));
        if (sb == npos) continue;
        for (std::size_t i = 0; i < a.nodes(); ++i) {
            const std::size_t ib = b.find_node(a.grid[i]);
            if (ib == npos) continue;
            for (std::size_t k = 0; k < a.times(); ++k) {
                if (!w.contains(a.grid[i], a.source_radius(s), a.time(k))) continue;
                worst = std::max(worst, std::abs(a.value(i, s, k) - b.value(ib, sb, k)));
                ++count;
            }
        }
    }
    HMFLOW_REQUIRE(count > 0, InvalidInput, "sup_difference: no shared entries in window");
    return worst;
}

/// Rebuilds the exterior table with R_far doubled and compares on the window;
/// throws when the truncated far boundary is still felt.
inline Check check_exterior_truncation(const KernelTable& ext, const Window& w, double tol = 1e-6) {
    HMFLOW_REQUIRE(ext.domain.kind == DomainKind::exterior, InvalidInput, "exterior truncation: not an exterior table");
    const double h = ext.grid.spacing();
    const auto wide_grid = domain_grid(DomainSpec::exterior(2.0 * ext.domain.outer, ext.domain.m), h);
    std::vector<std::size_t> src;
    for (std::size_t s = 0; s < ext.sources(); ++s) src.push_back(ext.source_nodes[s]);
    const auto wide = build_exterior_kernel(2.0 * ext.domain.outer, ext.domain.m, wide_grid, ext.axis, src);
    const double gap = sup_difference(ext, wide, w);
    if (gap > tol) {
        std::ostringstream os;
        os << "exterior kernel: doubling R_far moves values by " << gap << " on the window; use a larger R_far";
        throw ConvergenceError(os.str());
    }
    return Check::at_most("exterior truncation " + ext.domain.describe(), gap, tol);
}

// ---------------------------------------------------------------- eps -> 0

struct EpsilonLimitReport {
    std::vector<double> eps;
    std::vector<double> gap;  // sup over K of |G0_{R,eps} - G0_R|
    bool decreasing = false;
    double fitted_order = 0.0;
    double order_stderr = 0.0;
    double capacity_order = 0.0;  // m - 2
    double proof_order = 0.0;     // m/2 - 1
    Window window;

    std::vector<Check> checks() const {
        std::vector<Check> out;
        out.push_back(Check::flag("eps-limit gap decreasing", decreasing));
        out.push_back(Check::at_least("eps-limit fitted order", fitted_order, proof_order - 0.2));
        return out;
    }
};

/// Gaps for a decreasing eps sweep against a ball table built on the same axis;
/// the annulus grids reuse the ball spacing so the nodes coincide.
inline EpsilonLimitReport verify_epsilon_limit(const std::vector<double>& eps, double R, int m, double h,
                                               const TimeAxis& axis, std::optional<Window> window = std::nullopt) {
    HMFLOW_REQUIRE(eps.size() >= 2, InvalidInput, "verify_epsilon_limit: need at least two eps values");
    for (std::size_t i = 1; i < eps.size(); ++i)
        HMFLOW_REQUIRE(eps[i] < eps[i - 1], InvalidInput, "verify_epsilon_limit: eps values must decrease");
    HMFLOW_REQUIRE(eps.back() >= 4.0 * h, InvalidInput, "verify_epsilon_limit: min eps must span 4 grid cells");
    EpsilonLimitReport rep;
    rep.eps = eps;
    rep.window = window.value_or(Window{0.25 * R, 0.75 * R, 0.0});
    HMFLOW_REQUIRE(rep.window.lo > eps.front(), InvalidInput,
                   "verify_epsilon_limit: window must exclude the holes (source radius below eps)");
    const double spacing = 8.0 * h;
    const auto ball_grid = domain_grid(DomainSpec::ball(R, m), h);
    const auto ball = build_ball_kernel(R, m, ball_grid, axis, aligned_sources(ball_grid, spacing));
    for (double e : eps) {
        const auto g = domain_grid(DomainSpec::annulus(e, R, m), h);
        const auto ann = build_annulus_kernel(e, R, m, g, axis, std::nullopt, aligned_sources(g, spacing));
        rep.gap.push_back(sup_difference(ann, ball, rep.window));
    }
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.gap.size(); ++i) rep.decreasing = rep.decreasing && rep.gap[i] < rep.gap[i - 1];
    std::vector<double> x, y;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        x.push_back(std::log(eps[i]));
        y.push_back(std::log(rep.gap[i]));
    }
    rep.fitted_order = fit_slope(x, y, &rep.order_stderr);
    rep.capacity_order = m - 2.0;
    rep.proof_order = 0.5 * m - 1.0;
    return rep;
}

// ---------------------------------------------------------------- scaling

struct ScalingReport {
    double eps = 1.0;
    double value_mismatch = 0.0;  // relative to sup |G_{R,eps}|
    double flux_mismatch = 0.0;   // relative to sup of each flux array
    std::vector<Check> checks(double tol = 1e-3) const {
        return {Check::at_most("scaling identity (values)", value_mismatch, tol),
                Check::at_most("scaling identity (fluxes)", flux_mismatch, tol)};
    }
};

/// Compares G_{R,eps}(r, r'; tau) with eps^{-m} G_{R/eps,1}(r/eps, r'/eps; tau/eps^2)
/// and the fluxes with the eps^{-m-1} law. The tables must sit on scaled copies
/// of the same grid and axis.
inline ScalingReport scaling_mismatch(const KernelTable& small, const KernelTable& unit, double eps) {
    const int m = small.domain.m;
    HMFLOW_REQUIRE(unit.domain.m == m && small.nodes() == unit.nodes() && small.sources() == unit.sources() &&
                       small.times() == unit.times() && small.axis.steps == unit.axis.steps,
                   InvalidInput, "verify_scaling: incompatible grids");
    HMFLOW_REQUIRE(std::abs(small.axis.dt - eps * eps * unit.axis.dt) <= 1e-12 * small.axis.dt, InvalidInput,
                   "verify_scaling: time steps do not scale by eps^2");
    for (std::size_t i = 0; i < small.nodes(); ++i)
        HMFLOW_REQUIRE(std::abs(small.grid[i] - eps * unit.grid[i]) <= 1e-12 * std::max(1.0, small.grid[i]),
                       InvalidInput, "verify_scaling: incompatible grids");
    for (std::size_t s = 0; s < small.sources(); ++s)
        HMFLOW_REQUIRE(small.source_nodes[s] == unit.source_nodes[s], InvalidInput,
                       "verify_scaling: source sets differ");
    ScalingReport rep;
    rep.eps = eps;
    const double vs = std::pow(eps, -m);
    const double fs = std::pow(eps, -m - 1);
    double sup = 0.0, worst = 0.0;
    for (std::size_t q = 0; q < small.values.size(); ++q) {
        sup = std::max(sup, std::abs(small.values[q]));
        worst = std::max(worst, std::abs(small.values[q] - vs * unit.values[q]));
    }
    rep.value_mismatch = sup > 0 ? worst / sup : 0.0;
    auto flux_gap = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double fsup = 0.0, fw = 0.0;
        for (std::size_t q = 0; q < a.size(); ++q) {
            fsup = std::max(fsup, std::abs(a[q]));
            fw = std::max(fw, std::abs(a[q] - fs * b[q]));
        }
        return fsup > 0 ? fw / fsup : 0.0;
    };
    rep.flux_mismatch = std::max(flux_gap(small.flux_inner, unit.flux_inner), flux_gap(small.flux_outer, unit.flux_outer));
    return rep;
}

inline ScalingReport verify_scaling(double eps, double R, int m, double h, const TimeAxis& axis) {
    HMFLOW_REQUIRE(eps > 0.0 && eps < R, DomainError, "verify_scaling: need 0 < eps < R");
    const auto g_small = domain_grid(DomainSpec::annulus(eps, R, m), h);
    const auto g_unit = domain_grid(DomainSpec::annulus(1.0, R / eps, m), h / eps);
    TimeAxis unit_axis = axis;
    unit_axis.dt = axis.dt / (eps * eps);
    auto sources = aligned_sources(g_small, 8.0 * h);
    const auto small = build_annulus_kernel(eps, R, m, g_small, axis, std::nullopt, sources);
    const auto unit = build_annulus_kernel(1.0, R / eps, m, g_unit, unit_axis, std::nullopt, sources);
    return scaling_mismatch(small, unit, eps);
}

// ---------------------------------------------------------------- envelopes

struct EnvelopeSample {
    double d;          // distance entering the Gaussian factor
    double tau;
    double prefactor;  // delta(y) for kernel forms, 1 for fluxes
    double value;
};

/// value <= C prefactor tau^{-(m+1)/2} exp(-c d^2 / tau).
struct EnvelopeFit {
    std::string name;
    double C = 0.0;          // least-squares constant
    double c = 0.0;
    double C_bound = 0.0;    // smallest constant bounding every sample with this c
    double residual = 0.0;   // RMS log residual over RMS spread of the fitted points
    std::size_t samples = 0;
    bool ok = false;
    std::string note;

    double envelope(double d, double tau, double pref, int m, bool bound = true) const {
        return (bound ? C_bound : C) * pref * std::pow(tau, -0.5 * (m + 1)) * std::exp(-c * d * d / tau);
    }
};

struct EnvelopeOptions {
    std::optional<double> fixed_c;
    double floor = 1e-8;  // samples below floor * max are table noise
    int hull_bins = 40;   // 0 fits every sample instead of the upper hull
};

/// Fits a - c x to y = log(value / pref) + (m+1)/2 log tau, x = d^2 / tau.
/// An envelope is a bound, so by default only the upper hull (max y per bin of
/// x) enters the regression; C_bound then lifts the line over every sample.
inline EnvelopeFit fit_envelope(const std::string& name, const std::vector<EnvelopeSample>& raw, int m,
                                const EnvelopeOptions& opt = {}) {
    EnvelopeFit fit;
    fit.name = name;
    double vmax = 0.0;
    for (const auto& s : raw)
        if (s.prefactor > 0.0) vmax = std::max(vmax, s.value / s.prefactor);
    std::vector<double> xs, ys;
    for (const auto& s : raw) {
        if (!(s.tau > 0.0) || !(s.prefactor > 0.0) || s.value <= opt.floor * vmax * s.prefactor) continue;
        xs.push_back(s.d * s.d / s.tau);
        ys.push_back(std::log(s.value / s.prefactor) + 0.5 * (m + 1) * std::log(s.tau));
    }
    if (xs.size() < 3) {
        fit.note = "too few positive samples";
        return fit;
    }
    std::vector<double> x, y;
    if (opt.hull_bins > 0) {
        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        const double x0 = *lo, span = std::max(*hi - *lo, 1e-300);
        std::vector<std::size_t> best(opt.hull_bins, npos);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const int b = std::min(opt.hull_bins - 1, static_cast<int>((xs[i] - x0) / span * opt.hull_bins));
            if (best[b] == npos || ys[i] > ys[best[b]]) best[b] = i;
        }
        for (std::size_t i : best)
            if (i != npos) {
                x.push_back(xs[i]);
                y.push_back(ys[i]);
            }
    } else {
        x = xs;
        y = ys;
    }
    fit.samples = x.size();
    if (x.size() < 3) {
        fit.note = "too few hull points";
        return fit;
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= x.size();
    fit.c = opt.fixed_c ? *opt.fixed_c : -fit_slope(x, y);
    const double a = my + fit.c * mx;
    fit.C = std::exp(a);
    double rss = 0.0, var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (a - fit.c * x[i]);
        rss += e * e;
        var += (y[i] - my) * (y[i] - my);
    }
    fit.residual = var > 0 ? std::sqrt(rss / var) : 0.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.size(); ++i) worst = std::max(worst, ys[i] - (a - fit.c * xs[i]));
    fit.C_bound = std::exp(a + std::max(0.0, worst));
    fit.ok = fit.c > 0.0 && std::isfinite(fit.C);
    if (!fit.ok) fit.note = "fit did not produce a decaying Gaussian";
    return fit;
}

/// Kernel samples with prefactor dist(y, boundary), the form the kernel envelope takes.
inline std::vector<EnvelopeSample> kernel_samples(const KernelTable& t) {
    std::vector<EnvelopeSample> out;
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t s = 0; s < t.sources(); ++s) {
            const double rp = t.source_radius(s);
            double dist = t.domain.has_outer_boundary() ? t.domain.outer - rp : std::numeric_limits<double>::infinity();
            if (t.domain.has_inner_boundary()) dist = std::min(dist, rp - t.domain.inner);
            if (dist <= 0.0) continue;
            for (std::size_t i = 0; i < t.nodes(); ++i)
                out.push_back({std::abs(t.grid[i] - rp), t.time(k), dist, t.value(i, s, k)});
        }
    return out;
}

/// Flux samples at one boundary sphere: d = distance of the target to that sphere.
inline std::vector<EnvelopeSample> flux_samples(const KernelTable& t, Side side) {
    std::vector<EnvelopeSample> out;
    const double sphere = side == Side::inner ? t.domain.inner : t.domain.outer;
    for (std::size_t s = 0; s < t.sources(); ++s) {
        const auto f = t.flux_series(side, s);
        const double d = std::abs(t.source_radius(s) - sphere);
        for (int n = 1; n <= t.axis.steps; ++n) out.push_back({d, t.axis.step_time(n), 1.0, f[n]});
    }
    return out;
}

/// Free-kernel surrogate (4 pi tau)^{-m/2} tau^{-1/2} e^{-d^2/(4 tau)}: with c = 1/4
/// the fitted envelope must bound every sample.
inline bool gaussian_factor_sanity(int m) {
    std::vector<EnvelopeSample> s;
    for (double d : {0.1, 0.3, 0.7, 1.2})
        for (double tau : {0.005, 0.02, 0.1, 0.4})
            s.push_back({d, tau, 1.0,
                         std::pow(4 * std::numbers::pi * tau, -0.5 * m) / std::sqrt(tau) * std::exp(-d * d / (4 * tau))});
    const auto fit = fit_envelope("free surrogate", s, m, {.fixed_c = 0.25, .floor = 0.0, .hull_bins = 0});
    for (const auto& x : s)
        if (x.value > fit.envelope(x.d, x.tau, 1.0, m) * (1 + 1e-12)) return false;
    return fit.ok;
}

struct EnvelopeReport {
    std::vector<EnvelopeFit> fits;     // judged: residual <= tolerance
    std::vector<EnvelopeFit> reported; // exploratory
    std::vector<double> eps;           // inner-flux probe
    std::vector<double> C_of_eps;      // fitted C per eps
    double C_eps_slope = 0.0;          // d log C / d log eps
    double min_flux = 0.0;
    bool gaussian_sanity = false;

    std::vector<Check> checks(double residual_tol = 0.15, double flux_tol = 1e-6) const {
        std::vector<Check> out;
        for (const auto& f : fits) {
            std::ostringstream os;
            os << "C=" << f.C << " c=" << f.c << " C_bound=" << f.C_bound << " points=" << f.samples;
            if (!f.ok) os << " " << f.note;
            auto c = Check::at_most("envelope residual " + f.name, f.ok ? f.residual : INFINITY, residual_tol, os.str());
            out.push_back(c);
        }
        out.push_back(Check::at_least("all fluxes", min_flux, -flux_tol, "min over every flux array"));
        out.push_back(Check::flag("c = 1/4 bounds the free surrogate", gaussian_sanity));
        for (const auto& f : reported) {
            std::ostringstream os;
            os << "c=" << f.c << " residual=" << f.residual;
            out.push_back(Check::info("envelope " + f.name + " C", f.C, os.str()));
        }
        if (C_of_eps.size() >= 2) out.push_back(Check::info("inner flux C(eps) slope in log eps", C_eps_slope));
        return out;
    }
};

inline double min_flux(const KernelTable& t) {
    double lo = 0.0;
    for (double v : t.flux_inner) lo = std::min(lo, v);
    for (double v : t.flux_outer) lo = std::min(lo, v);
    return lo;
}

/// Kernel and flux envelopes for a ball, an annulus eps sweep (same R) and
/// optionally the exterior domain.
inline EnvelopeReport fit_envelopes(const KernelTable& ball, const std::vector<const KernelTable*>& annuli,
                                    const KernelTable* exterior = nullptr) {
    const int m = ball.domain.m;
    EnvelopeReport rep;
    rep.min_flux = min_flux(ball);
    rep.fits.push_back(fit_envelope("ball kernel (dist prefactor)", kernel_samples(ball), m));
    rep.fits.push_back(fit_envelope("ball outer flux", flux_samples(ball, Side::outer), m));
    std::vector<double> le, lc;
    for (const KernelTable* a : annuli) {
        HMFLOW_REQUIRE(a && a->domain.kind == DomainKind::annulus, InvalidInput, "fit_envelopes: expected annulus tables");
        rep.min_flux = std::min(rep.min_flux, min_flux(*a));
        std::ostringstream tag;
        tag << "eps=" << a->domain.inner;
        rep.fits.push_back(fit_envelope("annulus outer flux " + tag.str(), flux_samples(*a, Side::outer), m));
        auto inner = fit_envelope("annulus inner flux " + tag.str(), flux_samples(*a, Side::inner), m);
        rep.eps.push_back(a->domain.inner);
        rep.C_of_eps.push_back(inner.C);
        if (inner.ok) {
            le.push_back(std::log(a->domain.inner));
            lc.push_back(std::log(inner.C));
        }
        rep.reported.push_back(std::move(inner));
    }
    if (le.size() >= 2) rep.C_eps_slope = fit_slope(le, lc);
    if (exterior) {
        rep.min_flux = std::min(rep.min_flux, min_flux(*exterior));
        rep.reported.push_back(fit_envelope("exterior kernel (dist prefactor)", kernel_samples(*exterior), m));
        rep.reported.push_back(fit_envelope("exterior inner flux", flux_samples(*exterior, Side::inner), m));
    }
    rep.gaussian_sanity = gaussian_factor_sanity(m);
    return rep;
}

/// sup_tau of the outer flux for a target at r, for a sequence of ball radii;
/// the free-kernel picture gives sup ~ (R - r)^{-(m+1)}.
struct FluxDecayReport {
    std::vector<double> R;
    std::vector<double> peak;
    double fitted_exponent = 0.0;  // slope of log peak vs log(R - r)
    double expected_exponent = 0.0;
    Check check(double rel_tol = 0.1) const {
        const double rel = std::abs(fitted_exponent - expected_exponent) / std::abs(expected_exponent);
        std::ostringstream os;
        os << "exponent " << fitted_exponent << " vs " << expected_exponent;
        return Check::at_most("outer flux decay exponent", rel, rel_tol, os.str());
    }
};

inline FluxDecayReport flux_decay_probe(const std::vector<double>& radii, int m, double h, double dt, double target = 0.0) {
    FluxDecayReport rep;
    rep.expected_exponent = -(m + 1.0);
    std::vector<double> x, y;
    for (double R : radii) {
        const double d = R - target;
        // The peak of d tau^{-m/2-1} e^{-d^2/(4 tau)} sits at tau = d^2 / (2m + 4).
        const double horizon = std::ceil(2.0 * d * d / (2.0 * m + 4.0) / dt) * dt;
        const auto g = domain_grid(DomainSpec::ball(R, m), h);
        const auto axis = TimeAxis::make(dt, horizon, horizon);
        const std::size_t node = static_cast<std::size_t>(std::lround(target / h));
        const auto t = build_ball_kernel(R, m, g, axis, {node});
        const auto f = t.flux_series(Side::outer, 0);
        const double pk = *std::max_element(f.begin(), f.end());
        rep.R.push_back(R);
        rep.peak.push_back(pk);
        x.push_back(std::log(d));
        y.push_back(std::log(pk));
    }
    rep.fitted_exponent = fit_slope(x, y);
    return rep;
}

} // namespace hmflow::green
