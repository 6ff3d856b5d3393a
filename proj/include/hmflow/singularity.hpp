#pragma once

// Removability of a point singularity for radial caloric functions on a
// punctured ball: a growth test against |x|^{2-m} and a reconstruction from
// the initial slice and the outer boundary trace through the ball Green
// table. The inner-boundary term of the annulus representation is probed
// separately on an eps sweep.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/error.hpp"
#include "hmflow/green_radial.hpp"
#include "hmflow/radial_grid.hpp"
#include "hmflow/radial_kernel.hpp"
#include "hmflow/report.hpp"

namespace hmflow::singular {

using CaloricFn = std::function<double(double r, double t)>;

/// u(r_i, t_j) on [r_min, R] x [t1, t2], times uniform.
struct PuncturedSample {
    int m = 3;
    double R = 1.0;
    std::vector<double> radii;
    std::vector<double> times;
    std::vector<std::vector<double>> values;  // values[j][i]
    std::string label;

    void validate() const {
        HMFLOW_REQUIRE(m >= 3, DomainError, "PuncturedSample: dimension must be >= 3");
        HMFLOW_REQUIRE(radii.size() >= 2 && times.size() >= 2, InvalidInput, "PuncturedSample: too few samples");
        HMFLOW_REQUIRE(radii.front() > 0.0, DomainError, "PuncturedSample: r_min must be positive");
        for (std::size_t i = 1; i < radii.size(); ++i)
            HMFLOW_REQUIRE(radii[i] > radii[i - 1], InvalidInput, "PuncturedSample: radii must increase");
        HMFLOW_REQUIRE(radii.back() <= R * (1.0 + 1e-12), InvalidInput, "PuncturedSample: radii beyond R");
        HMFLOW_REQUIRE(times.front() > 0.0, DomainError, "PuncturedSample: need 0 < t1");
        const double dt = times[1] - times[0];
        HMFLOW_REQUIRE(dt > 0.0, InvalidInput, "PuncturedSample: times must increase");
        for (std::size_t j = 2; j < times.size(); ++j)
            HMFLOW_REQUIRE(std::abs(times[j] - times[j - 1] - dt) <= 1e-9 * dt, InvalidInput,
                           "PuncturedSample: time grid must be uniform");
        HMFLOW_REQUIRE(values.size() == times.size(), InvalidInput, "PuncturedSample: values/times mismatch");
        for (const auto& row : values) {
            HMFLOW_REQUIRE(row.size() == radii.size(), InvalidInput, "PuncturedSample: values/radii mismatch");
            for (double x : row) HMFLOW_REQUIRE(std::isfinite(x), InvalidInput, "PuncturedSample: non-finite value");
        }
    }

    static PuncturedSample from_function(int m, double R, std::vector<double> radii, std::vector<double> times,
                                         const CaloricFn& u, std::string label) {
        PuncturedSample s{m, R, std::move(radii), std::move(times), {}, std::move(label)};
        s.values.resize(s.times.size());
        for (std::size_t j = 0; j < s.times.size(); ++j) {
            s.values[j].resize(s.radii.size());
            for (std::size_t i = 0; i < s.radii.size(); ++i) s.values[j][i] = u(s.radii[i], s.times[j]);
        }
        s.validate();
        return s;
    }

    /// Rows r,t,u after an "r,t,u" header, in any order; they must fill the r x t lattice.
    static PuncturedSample from_csv(std::istream& is, int m, double R, std::string label) {
        std::string line;
        HMFLOW_REQUIRE(static_cast<bool>(std::getline(is, line)), InvalidInput, "sample csv: empty input");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        HMFLOW_REQUIRE(line == "r,t,u", InvalidInput, "sample csv: header must be 'r,t,u', found '" + line + "'");
        struct Row {
            double r, t, u;
        };
        std::vector<Row> rows;
        for (int no = 2; std::getline(is, line); ++no) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::istringstream ls(line);
            Row row{};
            char c1 = 0, c2 = 0;
            ls >> row.r >> c1 >> row.t >> c2 >> row.u;
            HMFLOW_REQUIRE(!ls.fail() && c1 == ',' && c2 == ',' && (ls >> std::ws).eof(), InvalidInput,
                           "sample csv: line " + std::to_string(no) + ": expected r,t,u");
            rows.push_back(row);
        }
        auto distinct = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            std::vector<double> out;
            for (double x : v)
                if (out.empty() || std::abs(x - out.back()) > 1e-12 * std::max(1.0, std::abs(x))) out.push_back(x);
            return out;
        };
        std::vector<double> rs, ts;
        for (const auto& row : rows) rs.push_back(row.r), ts.push_back(row.t);
        PuncturedSample s{m, R, distinct(rs), distinct(ts), {}, std::move(label)};
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.values.assign(s.times.size(), std::vector<double>(s.radii.size(), nan));
        auto index = [](const std::vector<double>& v, double x) {
            auto it = std::lower_bound(v.begin(), v.end(), x - 1e-12 * std::max(1.0, std::abs(x)));
            return static_cast<std::size_t>(it - v.begin());
        };
        for (const auto& row : rows) s.values[index(s.times, row.t)][index(s.radii, row.r)] = row.u;
        for (const auto& v : s.values)
            for (double x : v) HMFLOW_REQUIRE(!std::isnan(x), InvalidInput, "sample csv: rows do not fill the r x t lattice");
        s.validate();
        return s;
    }

    bool covers_boundary() const { return std::abs(radii.back() - R) <= 1e-12 * R; }
    double t1() const { return times.front(); }
    double t2() const { return times.back(); }
    double step() const { return times[1] - times[0]; }

    /// Linear in r and t; r below r_min or outside [t1, t2] is an error.
    double at(double r, double t) const {
        HMFLOW_REQUIRE(t >= t1() - 1e-12 && t <= t2() + 1e-12, DomainError, "PuncturedSample: t outside samples");
        HMFLOW_REQUIRE(r >= radii.front() - 1e-12 && r <= radii.back() + 1e-12, DomainError,
                       "PuncturedSample: r outside samples");
        const double x = std::clamp((t - t1()) / step(), 0.0, static_cast<double>(times.size() - 1));
        const std::size_t j = std::min(static_cast<std::size_t>(x), times.size() - 2);
        const double wt = x - static_cast<double>(j);
        auto it = std::upper_bound(radii.begin(), radii.end(), r);
        std::size_t i = static_cast<std::size_t>(it - radii.begin());
        i = std::clamp<std::size_t>(i, 1, radii.size() - 1);
        const double wr = std::clamp((r - radii[i - 1]) / (radii[i] - radii[i - 1]), 0.0, 1.0);
        auto slice = [&](std::size_t jj) { return (1.0 - wr) * values[jj][i - 1] + wr * values[jj][i]; };
        return (1.0 - wt) * slice(j) + wt * slice(j + 1);
    }
};

struct GrowthFit {
    double p = 0.0;          // slope of log sup_t |u| against log(1/r)
    double stderr_p = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // p -+ 2 stderr
    bool bounded = false;    // u vanishes near the origin: p undefined
    bool satisfied = false;  // p <= m - 2 + slack
    std::size_t radii_used = 0;
};

/// Fit over the sample radii r <= R/4; needs six of them spanning a decade.
inline GrowthFit growth_exponent(const PuncturedSample& s, double slack = 0.1) {
    s.validate();
    std::vector<double> x, y;
    bool all_zero = true;
    for (std::size_t i = 0; i < s.radii.size() && s.radii[i] <= 0.25 * s.R * (1.0 + 1e-12); ++i) {
        double sup = 0.0;
        for (const auto& row : s.values) sup = std::max(sup, std::abs(row[i]));
        x.push_back(std::log(1.0 / s.radii[i]));
        y.push_back(sup > 0.0 ? std::log(sup) : 0.0);
        if (sup > 0.0) all_zero = false;
    }
    HMFLOW_REQUIRE(x.size() >= 6, InvalidInput, "growth_exponent: need at least 6 radii below R/4");
    HMFLOW_REQUIRE(x.front() - x.back() >= std::log(10.0) - 1e-12, InvalidInput,
                   "growth_exponent: radii below R/4 must span a decade");
    GrowthFit fit;
    fit.radii_used = x.size();
    if (all_zero) {
        fit.bounded = true;
        fit.satisfied = true;
        return fit;
    }
    fit.p = fit_slope(x, y, &fit.stderr_p);
    fit.ci_lo = fit.p - 2.0 * fit.stderr_p;
    fit.ci_hi = fit.p + 2.0 * fit.stderr_p;
    fit.satisfied = fit.p <= s.m - 2 + slack;
    return fit;
}

namespace detail {

// int_0^tau f(tau - sigma) g(sigma) d sigma as a Stieltjes sum against the running
// integral M of f, with g averaged per step. f may be a pulse narrower than dt; M is not.
inline double convolve_steps(std::span<const double> M, std::size_t n_tau, double dt, const std::function<double(double)>& g) {
    double s = 0.0, g0 = g(0.0);
    for (std::size_t n = 0; n < n_tau; ++n) {
        const double g1 = g(static_cast<double>(n + 1) * dt);
        s += 0.5 * (g0 + g1) * (M[n_tau - n] - M[n_tau - n - 1]);
        g0 = g1;
    }
    return s;
}

// Trapezoid shell weights on the table grid, dropping nodes below r_min.
inline std::vector<double> punctured_weights(const RadialGrid& g, double r_min) {
    auto w = g.shell_weights();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] < r_min - 1e-12) w[i] = 0.0;
    return w;
}

} // namespace detail

struct Reconstruction {
    std::vector<double> radii;                    // targets (table source nodes)
    std::vector<double> times;                    // t1 + stored table times within [t1, t2]
    std::vector<std::vector<double>> values;      // [k][target]
    std::vector<std::vector<double>> initial_term;
    std::vector<std::vector<double>> boundary_term;

    /// sup |u_hat - u| / sup |u| over targets in [lo, hi] and all times.
    double relative_gap(const PuncturedSample& s, double lo, double hi) const {
        double gap = 0.0, size = 0.0;
        for (std::size_t k = 0; k < times.size(); ++k)
            for (std::size_t q = 0; q < radii.size(); ++q) {
                if (radii[q] < std::max(lo, s.radii.front()) - 1e-12 || radii[q] > hi + 1e-12) continue;
                const double u = s.at(radii[q], times[k]);
                gap = std::max(gap, std::abs(values[k][q] - u));
                size = std::max(size, std::abs(u));
            }
        HMFLOW_REQUIRE(size > 0.0, InvalidInput, "relative_gap: sample vanishes on the test annulus");
        return gap / size;
    }
};

/// u_hat(r, t) = int_{B_R} G0(r, r'; t - t1) u(r', t1) dy + int_{t1}^t dG/dn(r; t - s) u(R, s) |dB_R| ds.
inline Reconstruction reconstruct(const PuncturedSample& s, const KernelTable& ball) {
    s.validate();
    HMFLOW_REQUIRE(ball.domain.kind == DomainKind::ball, InvalidInput, "reconstruct: need a ball kernel table");
    HMFLOW_REQUIRE(ball.domain.m == s.m && std::abs(ball.domain.outer - s.R) <= 1e-12 * s.R, InvalidInput,
                   "reconstruct: table dimension or radius differs from the sample");
    HMFLOW_REQUIRE(s.covers_boundary(), InvalidInput, "reconstruct: sample must include the boundary trace at r = R");
    const auto& g = ball.grid;
    const auto w = detail::punctured_weights(g, s.radii.front());
    std::vector<double> u1(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (w[i] > 0.0) u1[i] = s.at(g[i], s.t1());
    const double area = sphere_area(s.m) * std::pow(s.R, s.m - 1);
    const double dt = ball.axis.dt;
    auto trace = [&](double sigma) { return s.at(s.R, std::min(s.t1() + sigma, s.t2())); };

    Reconstruction rec;
    for (std::size_t q = 0; q < ball.sources(); ++q) rec.radii.push_back(ball.source_radius(q));
    for (std::size_t k = 0; k < ball.times(); ++k) {
        const double tau = ball.time(k);
        if (s.t1() + tau > s.t2() + 1e-12) break;
        const auto n_tau = static_cast<std::size_t>(std::lround(tau / dt));
        std::vector<double> I1(ball.sources()), I3(ball.sources()), total(ball.sources());
        for (std::size_t q = 0; q < ball.sources(); ++q) {
            const auto prof = ball.profile(q, k);
            double a = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) a += prof[i] * u1[i] * w[i];
            I1[q] = a;
            I3[q] = area * detail::convolve_steps(ball.flux_cumulative(Side::outer, q), n_tau, dt, trace);
            total[q] = I1[q] + I3[q];
        }
        rec.times.push_back(s.t1() + tau);
        rec.values.push_back(std::move(total));
        rec.initial_term.push_back(std::move(I1));
        rec.boundary_term.push_back(std::move(I3));
    }
    HMFLOW_REQUIRE(!rec.times.empty(), InvalidInput, "reconstruct: no table time fits inside [t1, t2]");
    return rec;
}

enum class Verdict { removable, singular, inconclusive };

inline const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::removable: return "removable";
    case Verdict::singular: return "singular";
    default: return "inconclusive";
    }
}

struct ClassifyOptions {
    double slack = 0.1;
    double tolerance = 1e-3;      // relative reconstruction gap
    double singular_factor = 10.0;
    double annulus_lo = 0.25;     // test annulus as fractions of R
    double annulus_hi = 0.75;
};

struct Classification {
    Verdict verdict = Verdict::inconclusive;
    GrowthFit growth;
    double reconstruction_gap = 0.0;
    bool reconstruction_bounded = false;  // u_hat finite and within the maximum-principle bound at r = 0
    double origin_value = 0.0;
    std::string reason;
};

inline Classification classify(const PuncturedSample& s, const KernelTable& ball, const ClassifyOptions& opt = {}) {
    Classification c;
    c.growth = growth_exponent(s, opt.slack);
    const auto rec = reconstruct(s, ball);
    c.reconstruction_gap = rec.relative_gap(s, opt.annulus_lo * s.R, opt.annulus_hi * s.R);
    double bound = 0.0;
    for (double x : s.values.front()) bound = std::max(bound, std::abs(x));
    for (const auto& row : s.values) bound = std::max(bound, std::abs(row.back()));
    c.reconstruction_bounded = true;
    if (rec.radii.front() == 0.0)
        for (const auto& v : rec.values) {
            c.origin_value = std::max(c.origin_value, std::abs(v.front()));
            if (!std::isfinite(v.front()) || std::abs(v.front()) > bound * (1.0 + 1e-2) + 1e-12)
                c.reconstruction_bounded = false;
        }
    const bool match = c.reconstruction_gap <= opt.tolerance;
    const bool mismatch = c.reconstruction_gap > opt.singular_factor * opt.tolerance;
    std::ostringstream why;
    why << "growth p=" << c.growth.p << (c.growth.bounded ? " (bounded)" : "") << " vs m-2+slack="
        << s.m - 2 + opt.slack << "; reconstruction gap " << c.reconstruction_gap << " vs tol " << opt.tolerance;
    if (c.growth.satisfied && match)
        c.verdict = Verdict::removable;
    else if (!c.growth.satisfied || mismatch)
        c.verdict = Verdict::singular;
    else
        c.verdict = Verdict::inconclusive;
    c.reason = why.str();
    return c;
}

/// Terms of the annulus representation at one target radius and elapsed time.
struct TermLog {
    double eps = 0.0;
    double I1 = 0.0;  // initial slice against G_{R,eps}
    double I2 = 0.0;  // inner sphere r = eps
    double I3 = 0.0;  // outer sphere r = R
    double u = 0.0;   // exact value at the target
    double sum() const { return I1 + I2 + I3; }
};

struct InnerTermProbe {
    std::string label;
    int m = 3;
    double target = 0.5;
    double tau = 0.0;
    std::vector<TermLog> terms;
    double I2_order = 0.0;  // fitted d log |I2| / d log eps
    double I2_order_stderr = 0.0;
    std::optional<double> ball_value;  // (4.5)-type value without the inner term, when a ball table is given

    std::string log() const {
        std::ostringstream os;
        os.precision(10);
        os << "# " << label << " m=" << m << " r=" << target << " t-t1=" << tau << "\n";
        os << "eps,I1,I2,I3,sum,u,sum_minus_u\n";
        for (const auto& t : terms)
            os << t.eps << "," << t.I1 << "," << t.I2 << "," << t.I3 << "," << t.sum() << "," << t.u << ","
               << t.sum() - t.u << "\n";
        os << "# I2 order in eps: " << I2_order << " +- " << I2_order_stderr << "\n";
        if (ball_value) os << "# ball representation (no inner term): " << *ball_value << "\n";
        return os.str();
    }
};

/// I1, I2, I3 of the annulus representation for a caloric u on the punctured
/// ball, at the source node nearest `target` and elapsed time tau, one annulus
/// table per eps (all on the same grid spacing and time axis).
inline InnerTermProbe probe_inner_term(const CaloricFn& u, double t1, const std::vector<const KernelTable*>& annuli,
                                       double target, double tau, std::string label) {
    HMFLOW_REQUIRE(!annuli.empty(), InvalidInput, "probe_inner_term: no annulus tables");
    InnerTermProbe probe;
    probe.label = std::move(label);
    probe.m = annuli.front()->domain.m;
    probe.tau = tau;
    std::vector<double> le, lI;
    for (const KernelTable* tab : annuli) {
        HMFLOW_REQUIRE(tab->domain.kind == DomainKind::annulus, InvalidInput, "probe_inner_term: need annulus tables");
        const std::size_t q = tab->find_source(target);
        HMFLOW_REQUIRE(q != static_cast<std::size_t>(-1), InvalidInput, "probe_inner_term: target is not a source node");
        const std::size_t k = tab->axis.find_time(tau);
        HMFLOW_REQUIRE(k != static_cast<std::size_t>(-1), InvalidInput, "probe_inner_term: tau is not a stored time");
        const auto& g = tab->grid;
        const int m = tab->domain.m;
        const double eps = tab->domain.inner, R = tab->domain.outer, dt = tab->axis.dt;
        const auto w = g.shell_weights();
        const auto prof = tab->profile(q, k);
        TermLog t;
        t.eps = eps;
        for (std::size_t i = 0; i < g.size(); ++i) t.I1 += prof[i] * u(g[i], t1) * w[i];
        const auto n_tau = static_cast<std::size_t>(std::lround(tau / dt));
        t.I2 = sphere_area(m) * std::pow(eps, m - 1) *
               detail::convolve_steps(tab->flux_cumulative(Side::inner, q), n_tau, dt,
                                      [&](double s) { return u(eps, t1 + s); });
        t.I3 = sphere_area(m) * std::pow(R, m - 1) *
               detail::convolve_steps(tab->flux_cumulative(Side::outer, q), n_tau, dt,
                                      [&](double s) { return u(R, t1 + s); });
        t.u = u(tab->source_radius(q), t1 + tau);
        probe.target = tab->source_radius(q);
        probe.terms.push_back(t);
        if (std::abs(t.I2) > 0.0) {
            le.push_back(std::log(eps));
            lI.push_back(std::log(std::abs(t.I2)));
        }
    }
    if (le.size() >= 2) probe.I2_order = fit_slope(le, lI, &probe.I2_order_stderr);
    return probe;
}

/// Ball representation value at the same target, for comparison with the eps -> 0 limit.
inline double ball_representation(const CaloricFn& u, double t1, const KernelTable& ball, double target, double tau,
                                   double r_min = 0.0) {
    const std::size_t q = ball.find_source(target);
    HMFLOW_REQUIRE(q != static_cast<std::size_t>(-1), InvalidInput, "ball_representation: target is not a source node");
    const std::size_t k = ball.axis.find_time(tau);
    HMFLOW_REQUIRE(k != static_cast<std::size_t>(-1), InvalidInput, "ball_representation: tau is not a stored time");
    const auto& g = ball.grid;
    const auto w = detail::punctured_weights(g, std::max(r_min, 1e-300));
    const auto prof = ball.profile(q, k);
    double I1 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (w[i] > 0.0) I1 += prof[i] * u(g[i], t1) * w[i];
    const double R = ball.domain.outer;
    const auto n_tau = static_cast<std::size_t>(std::lround(tau / ball.axis.dt));
    const double I3 = sphere_area(ball.domain.m) * std::pow(R, ball.domain.m - 1) *
                      detail::convolve_steps(ball.flux_cumulative(Side::outer, q), n_tau, ball.axis.dt,
                                             [&](double s) { return u(R, t1 + s); });
    return I1 + I3;
}

namespace family {

/// Gamma(x, t + shift): caloric on all of R^m, smooth at the origin.
inline CaloricFn shifted_gaussian(int m, double shift = 1.0) {
    return [m, shift](double r, double t) { return eval_gamma(r * r, {m, t + shift}); };
}

/// |x|^{2-m}, static.
inline CaloricFn fundamental(int m) {
    return [m](double r, double) { return std::pow(r, 2 - m); };
}

/// Gamma(x, t - t_star) for t > t_star, zero before: a pulse emitted from the origin.
inline CaloricFn pulse(int m, double t_star) {
    return [m, t_star](double r, double t) { return t > t_star ? eval_gamma(r * r, {m, t - t_star}) : 0.0; };
}

} // namespace family

} // namespace hmflow::singular
