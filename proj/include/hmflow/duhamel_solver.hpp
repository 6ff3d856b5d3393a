#pragma once

// Picard iteration for radial solutions of u_t = Laplacian_m u + F(r, u, u_r, t)
// in Duhamel form on successive time windows, with the window rule driven by
// empirical C1 / C4 / C5' constants, continuation until a horizon or until the
// norm ||u||_inf + ||u_r||_inf passes a ceiling.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/error.hpp"
#include "hmflow/parallel.hpp"
#include "hmflow/radial_grid.hpp"
#include "hmflow/radial_kernel.hpp"

namespace hmflow::solver {

using SourceFn = std::function<double(double r, double u, double p, double t)>;
using GuessPerturbation = std::function<double(double r, double t)>;

/// u[k] sampled at times[k].
struct Path {
    std::vector<double> times;
    std::vector<std::vector<double>> u;

    std::size_t size() const { return times.size(); }
};

/// sup_t (||u||_inf + ||u_r||_inf) over a path.
inline double path_c1(const RadialGrid& g, const Path& p) {
    double s = 0.0;
    for (const auto& v : p.u) s = std::max(s, c1_norm(g, v));
    return s;
}

inline double path_c1_gap(const RadialGrid& g, const Path& a, const Path& b) {
    HMFLOW_REQUIRE(a.size() == b.size(), InvalidInput, "path gap: paths differ in length");
    double s = 0.0;
    std::vector<double> d(g.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.u[k][i] - b.u[k][i];
        s = std::max(s, c1_norm(g, d));
    }
    return s;
}

/// Constant in ||grad int_0^delta e^{(delta-s)Laplacian} f ds||_inf <= C5' sup|f| sqrt(delta)
/// for the free kernel in R^m: int |grad Gamma(., tau)| = Gamma((m+1)/2) / (Gamma(m/2) sqrt(tau)).
inline double gradient_kernel_constant(int m) { return 2.0 * std::tgamma(0.5 * (m + 1)) / std::tgamma(0.5 * m); }

/// Operators P = e^{dt Laplacian} and Q = e^{(dt/2) Laplacian} for one step size.
struct StepOperators {
    double dt;
    KernelOperator full;
    KernelOperator half;
    StepOperators(const RadialGrid& g, double step) : dt(step), full(g, step), half(g, 0.5 * step) {}
};

/// Builds operators once per distinct step size.
class OperatorCache {
public:
    explicit OperatorCache(RadialGrid g) : grid_(std::move(g)) {}
    const StepOperators& get(double dt) {
        auto it = ops_.find(dt);
        if (it == ops_.end()) it = ops_.emplace(dt, std::make_unique<StepOperators>(grid_, dt)).first;
        return *it->second;
    }
    const RadialGrid& grid() const { return grid_; }

private:
    RadialGrid grid_;
    std::map<double, std::unique_ptr<StepOperators>> ops_;
};

/// Free evolution of initial data on a uniform window time grid.
inline Path free_path(const StepOperators& ops, const std::vector<double>& initial, double t_start, int steps) {
    Path v;
    v.times.push_back(t_start);
    v.u.push_back(initial);
    for (int k = 1; k <= steps; ++k) {
        v.times.push_back(t_start + k * ops.dt);
        v.u.push_back(ops.full.apply(v.u.back()));
    }
    return v;
}

namespace detail {

inline void eval_source(const RadialGrid& g, const SourceFn& F, const std::vector<double>& u, const std::vector<double>& p,
                        double t, std::vector<double>& out) {
    out.resize(g.size());
    parallel::parallel_for(0, g.size(), [&](std::size_t i) { out[i] = F(g[i], u[i], p[i], t); });
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!std::isfinite(out[i])) {
            std::ostringstream os;
            os << "source is not finite at r=" << g[i] << ", t=" << t << " (u=" << u[i] << ", u_r=" << p[i] << ")";
            throw BlowupSignal(os.str(), t);
        }
}

} // namespace detail

/// next(t_k) = v(t_k) + sum_j dt e^{(t_k - t_{j-1/2})Laplacian} F(prev at t_{j-1/2}),
/// with the midpoint state taken as the mean of prev at t_{j-1} and t_j.
inline Path picard_step(const RadialGrid& g, const StepOperators& ops, const Path& prev, const Path& free,
                        const SourceFn& F) {
    HMFLOW_REQUIRE(prev.size() == free.size() && prev.size() >= 1, InvalidInput, "picard_step: path sizes differ");
    const std::size_t n = g.size();
    Path next;
    next.times = free.times;
    next.u.push_back(free.u[0]);
    std::vector<double> D(n, 0.0), mid(n), dmid(n), f, tmp(n);
    auto dprev = radial_derivative(g, prev.u[0]);
    for (std::size_t k = 1; k < prev.size(); ++k) {
        const auto dk = radial_derivative(g, prev.u[k]);
        for (std::size_t i = 0; i < n; ++i) {
            mid[i] = 0.5 * (prev.u[k - 1][i] + prev.u[k][i]);
            dmid[i] = 0.5 * (dprev[i] + dk[i]);
        }
        dprev = dk;
        detail::eval_source(g, F, mid, dmid, 0.5 * (prev.times[k - 1] + prev.times[k]), f);
        auto PD = ops.full.apply(D);
        ops.half.apply(f, tmp);
        for (std::size_t i = 0; i < n; ++i) D[i] = PD[i] + ops.dt * tmp[i];
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i) u[i] = free.u[k][i] + D[i];
        next.u.push_back(std::move(u));
    }
    return next;
}

struct WindowPolicy {
    double c1_floor = 0.1;       // C1 used when the solution so far is smaller
    double safety = 2.0;         // C4 = safety * sup |F| over the 2 C1 tube
    int tube_samples = 5;        // per axis (u and u_r) of the tube lattice
    bool adaptive = true;        // double after an accepted window, halve on failure
    int max_halvings = 40;
    bool enforce_bound = true;   // reject windows whose iterates leave 2 C1
};

struct SolveConfig {
    RadialGrid grid;
    double dt = 1e-3;
    int min_steps = 4;           // per window; windows shorter than min_steps dt refine dt
    double tolerance = 1e-8;     // C1 Cauchy gap
    int max_iterations = 40;
    double norm_ceiling = 1e6;
    double metric_scale = 0.0;   // R_max must be >= 20 x this when set
    WindowPolicy policy;

    explicit SolveConfig(RadialGrid g) : grid(std::move(g)) {}

    void validate() const {
        HMFLOW_REQUIRE(grid.front() == 0.0, InvalidInput, "SolveConfig: grid must start at r = 0");
        HMFLOW_REQUIRE(dt > 0.0 && std::isfinite(dt), InvalidInput, "SolveConfig: dt must be positive");
        HMFLOW_REQUIRE(tolerance > 0.0, InvalidInput, "SolveConfig: tolerance must be positive");
        HMFLOW_REQUIRE(max_iterations >= 2 && min_steps >= 1, InvalidInput, "SolveConfig: bad iteration limits");
        HMFLOW_REQUIRE(norm_ceiling > 0.0, InvalidInput, "SolveConfig: norm ceiling must be positive");
        HMFLOW_REQUIRE(grid.back() >= 20.0 * metric_scale, InvalidInput,
                       "SolveConfig: truncation radius must be at least 20x the metric scale");
        HMFLOW_REQUIRE(policy.c1_floor > 0.0 && policy.safety >= 1.0 && policy.tube_samples >= 2, InvalidInput,
                       "SolveConfig: bad window policy");
    }
};

struct WindowResult {
    Path path;
    int iterations = 0;             // Picard steps taken
    std::vector<double> gaps;       // C1 gap between successive iterates
    std::vector<double> iterate_norms;
    double contraction_ratio = 0.0; // geometric mean of successive gap ratios above noise
    double C1 = 0.0;
    double max_iterate_norm = 0.0;
    double delta = 0.0;
    int steps = 0;
};

/// Geometric mean of g_i / g_{i-1} over the first (up to four) ratios whose
/// denominator sits above the round-off floor.
inline double contraction_ratio(const std::vector<double>& gaps, double floor) {
    double logsum = 0.0;
    int count = 0;
    for (std::size_t i = 1; i < gaps.size() && count < 4; ++i) {
        if (gaps[i - 1] <= floor || gaps[i] <= 0.0) break;
        logsum += std::log(gaps[i] / gaps[i - 1]);
        ++count;
    }
    return count ? std::exp(logsum / count) : 0.0;
}

/// Step count and step size of a window of length delta.
inline std::pair<int, double> window_steps(double delta, const SolveConfig& cfg) {
    int steps = static_cast<int>(std::lround(delta / cfg.dt));
    if (steps < cfg.min_steps || std::abs(steps * cfg.dt - delta) > 1e-9 * delta)
        steps = std::max(cfg.min_steps, static_cast<int>(std::ceil(delta / cfg.dt - 1e-9)));
    return {steps, delta / steps};
}

/// Iterates Picard steps from rho_1(t) = initial (plus an optional perturbation)
/// until the C1 gap drops below the tolerance.
inline WindowResult solve_window(const std::vector<double>& initial, double t_start, double delta, const SourceFn& F,
                                 const SolveConfig& cfg, OperatorCache& cache, double C1,
                                 const GuessPerturbation& perturb = {}) {
    const auto& g = cfg.grid;
    HMFLOW_REQUIRE(initial.size() == g.size(), InvalidInput, "solve_window: initial data size mismatch");
    HMFLOW_REQUIRE(delta > 0.0, InvalidInput, "solve_window: window length must be positive");
    require_bounded(initial, "solve_window");
    const auto [steps, h] = window_steps(delta, cfg);
    const auto& ops = cache.get(h);
    const Path v = free_path(ops, initial, t_start, steps);

    WindowResult res;
    res.delta = delta;
    res.steps = steps;
    res.C1 = C1;
    Path prev;
    prev.times = v.times;
    prev.u.assign(v.size(), initial);
    if (perturb)
        for (std::size_t k = 1; k < prev.size(); ++k)
            for (std::size_t i = 0; i < g.size(); ++i) prev.u[k][i] += perturb(g[i], prev.times[k]);

    bool bound_violated = false;
    int rising = 0;
    const double floor = 1e-13 * std::max(1.0, C1);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        Path next = picard_step(g, ops, prev, v, F);
        const double gap = path_c1_gap(g, next, prev);
        const double norm = path_c1(g, next);
        res.iterations = it;
        res.gaps.push_back(gap);
        res.iterate_norms.push_back(norm);
        res.max_iterate_norm = std::max(res.max_iterate_norm, norm);
        if (norm > 2.0 * C1 * (1.0 + 1e-12)) bound_violated = true;
        prev = std::move(next);
        if (!std::isfinite(gap)) throw BlowupSignal("solve_window: iterates overflowed", t_start);
        if (gap < cfg.tolerance) break;
        rising = (res.gaps.size() >= 2 && gap >= res.gaps[res.gaps.size() - 2]) ? rising + 1 : 0;
        if (rising >= 3 || it == cfg.max_iterations) {
            res.contraction_ratio = contraction_ratio(res.gaps, floor);
            std::ostringstream os;
            os << "solve_window: no contraction on [" << t_start << ", " << t_start + delta << "], gap " << gap
               << " after " << it << " iterations, ratio " << res.contraction_ratio;
            throw NoContraction(os.str(), t_start, res.contraction_ratio);
        }
    }
    res.contraction_ratio = contraction_ratio(res.gaps, floor);
    res.path = std::move(prev);
    if (bound_violated && cfg.policy.enforce_bound) {
        std::ostringstream os;
        os << "solve_window: iterates reached " << res.max_iterate_norm << " > 2 C1 = " << 2.0 * C1 << " on ["
           << t_start << ", " << t_start + delta << "]";
        throw BoundExceeded(os.str(), t_start);
    }
    return res;
}

/// sup |F| over r in the grid, |u|, |u_r| <= radius and the given times.
inline double tube_sup(const RadialGrid& g, const SourceFn& F, double radius, const std::vector<double>& times,
                       int samples) {
    double s = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, g.size() / 64);
    for (double t : times)
        for (std::size_t i = 0; i < g.size(); i += stride)
            for (int a = 0; a < samples; ++a)
                for (int b = 0; b < samples; ++b) {
                    const double u = -radius + 2.0 * radius * a / (samples - 1);
                    const double p = -radius + 2.0 * radius * b / (samples - 1);
                    const double f = F(g[i], u, p, t);
                    if (std::isfinite(f)) s = std::max(s, std::abs(f));
                }
    return s;
}

/// Lipschitz constant of F in (u, u_r) estimated from random pairs in the tube.
inline double lipschitz_estimate(const RadialGrid& g, const SourceFn& F, double radius, double t, unsigned seed = 1,
                                 int pairs = 4000) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-radius, radius);
    std::uniform_int_distribution<std::size_t> I(0, g.size() - 1);
    double L = 0.0;
    for (int q = 0; q < pairs; ++q) {
        const double r = g[I(rng)];
        const double a = U(rng), b = U(rng), p = U(rng), q2 = U(rng);
        const double d = std::abs(a - b) + std::abs(p - q2);
        if (d < 1e-9 * radius) continue;
        L = std::max(L, std::abs(F(r, a, p, t) - F(r, b, q2, t)) / d);
    }
    return L;
}

struct WindowRecord {
    double t_start = 0.0;
    double delta = 0.0;
    double delta1 = 0.0;  // the delta_1 rule before adaptation
    int steps = 0;
    int iterations = 0;
    int attempts = 0;
    double contraction_ratio = 0.0;
    double C1 = 0.0;
    double C4 = 0.0;
    double max_iterate_norm = 0.0;
    std::vector<std::string> rejections;
};

struct Trajectory {
    RadialGrid grid;
    std::vector<double> times;
    std::vector<std::vector<double>> values;
    std::vector<double> norms;  // ||u||_inf + ||u_r||_inf at each time
    std::vector<WindowRecord> windows;
    double T0 = 0.0;            // horizon when reached, else last time the norm stayed below the ceiling
    bool blew_up = false;
    std::string stop_reason;

    explicit Trajectory(RadialGrid g) : grid(std::move(g)) {}

    std::size_t find_time(double t) const {
        for (std::size_t k = 0; k < times.size(); ++k)
            if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
        return static_cast<std::size_t>(-1);
    }
};

struct ContinueOptions {
    GuessPerturbation perturb;           // added to the first guess of every window
    std::optional<double> fixed_window;  // force delta (then no adaptation)
};

/// Windows from t0 to the horizon T. Each window starts from the delta_1 rule
/// min(1, T - T2, (C1 / (C4 + C4 C5'))^2); with the adaptive policy the previous
/// accepted length is doubled when that is larger. Failed windows are halved.
inline Trajectory continue_to_blowup(const std::vector<double>& initial, double t0, double T, const SourceFn& F,
                                     const SolveConfig& cfg, const ContinueOptions& opt = {}) {
    cfg.validate();
    HMFLOW_REQUIRE(t0 < T, DomainError, "continue_to_blowup: need t0 < T");
    HMFLOW_REQUIRE(initial.size() == cfg.grid.size(), InvalidInput, "continue_to_blowup: initial size mismatch");
    const auto& g = cfg.grid;
    OperatorCache cache(g);
    const double C5p = gradient_kernel_constant(g.dimension());
    Trajectory tr(g);
    tr.times.push_back(t0);
    tr.values.push_back(initial);
    tr.norms.push_back(c1_norm(g, initial));
    double running = tr.norms.back();
    double last_delta = 0.0;
    double t = t0;
    const double t_eps = 1e-12 * std::max(1.0, std::abs(T));

    while (t < T - t_eps) {
        WindowRecord rec;
        rec.t_start = t;
        rec.C1 = std::max(running, cfg.policy.c1_floor);
        const double remaining = T - t;
        const double cap = std::min(1.0, remaining);
        rec.C4 = cfg.policy.safety * tube_sup(g, F, 2.0 * rec.C1, {t, t + cap}, cfg.policy.tube_samples);
        const double rule = rec.C4 > 0.0 ? std::pow(rec.C1 / (rec.C4 * (1.0 + C5p)), 2) : cap;
        rec.delta1 = std::min(cap, rule);
        double delta = opt.fixed_window ? std::min(*opt.fixed_window, remaining) : rec.delta1;
        if (!opt.fixed_window && cfg.policy.adaptive && last_delta > 0.0) delta = std::max(delta, std::min(cap, 2.0 * last_delta));
        // Land exactly on the horizon instead of leaving a sliver.
        if (remaining - delta < 1e-9 * remaining + cfg.dt * 1e-6) delta = remaining;

        std::optional<WindowResult> res;
        for (int attempt = 0; attempt <= cfg.policy.max_halvings; ++attempt) {
            rec.attempts = attempt + 1;
            // Whole multiples of dt keep the trajectory on a uniform time grid;
            // only windows shorter than min_steps dt (or the final sliver) refine it.
            double d = delta;
            if (d >= cfg.min_steps * cfg.dt && d < remaining) d = std::floor(d / cfg.dt + 1e-9) * cfg.dt;
            try {
                res = solve_window(tr.values.back(), t, d, F, cfg, cache, rec.C1, opt.perturb);
                break;
            } catch (const BoundExceeded& e) {
                rec.rejections.push_back(e.what());
            } catch (const NoContraction& e) {
                rec.rejections.push_back(e.what());
            } catch (const BlowupSignal& e) {
                rec.rejections.push_back(e.what());
            }
            if (opt.fixed_window) break;
            delta *= 0.5;
        }
        if (!res) {
            tr.T0 = t;
            tr.blew_up = true;
            tr.stop_reason = "no window could be accepted at t=" + std::to_string(t) +
                             (rec.rejections.empty() ? std::string() : ": " + rec.rejections.back());
            tr.windows.push_back(std::move(rec));
            return tr;
        }
        rec.delta = res->delta;
        rec.steps = res->steps;
        rec.iterations = res->iterations;
        rec.contraction_ratio = res->contraction_ratio;
        rec.max_iterate_norm = res->max_iterate_norm;
        tr.windows.push_back(rec);
        last_delta = delta;
        for (std::size_t k = 1; k < res->path.size(); ++k) {
            const double nk = c1_norm(g, res->path.u[k]);
            if (!(nk <= cfg.norm_ceiling)) {
                tr.T0 = tr.times.back();
                tr.blew_up = true;
                std::ostringstream os;
                os << "norm " << nk << " passed the ceiling " << cfg.norm_ceiling << " at t=" << res->path.times[k];
                tr.stop_reason = os.str();
                return tr;
            }
            tr.times.push_back(res->path.times[k]);
            tr.values.push_back(std::move(res->path.u[k]));
            tr.norms.push_back(nk);
            running = std::max(running, nk);
        }
        t = tr.times.back();
    }
    tr.T0 = T;
    tr.stop_reason = "horizon reached";
    return tr;
}

struct UniquenessReport {
    std::vector<double> times;
    std::vector<double> E;  // sup over s <= t of the sup-norm gap plus the gradient gap
    double final_gap() const { return E.empty() ? 0.0 : E.back(); }
    bool passed(double tol = 1e-6) const { return final_gap() <= tol; }
};

/// E(t) over the common times of two trajectories on the same grid.
inline UniquenessReport uniqueness_gap(const Trajectory& a, const Trajectory& b) {
    HMFLOW_REQUIRE(a.grid.same_as(b.grid), InvalidInput, "uniqueness_gap: trajectories use different grids");
    UniquenessReport rep;
    double E = 0.0;
    std::vector<double> d(a.grid.size());
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        const std::size_t j = b.find_time(a.times[k]);
        if (j == static_cast<std::size_t>(-1)) continue;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[k][i] - b.values[j][i];
        E = std::max(E, c1_norm(a.grid, d));
        rep.times.push_back(a.times[k]);
        rep.E.push_back(E);
    }
    HMFLOW_REQUIRE(!rep.times.empty(), InvalidInput, "uniqueness_gap: no common times");
    return rep;
}

/// ||d/dr Duhamel(f)||_inf / (sup|f| sqrt(delta)) for a time-independent source;
/// bounded by gradient_kernel_constant(m).
inline double gradient_kernel_ratio(const RadialGrid& g, const std::vector<double>& f, double delta, int steps = 16) {
    const auto D = duhamel_integrate(
        g, [&](double) { return f; }, 0.0, delta, steps);
    return sup_norm(radial_derivative(g, D.values)) / (sup_norm(f) * std::sqrt(delta));
}

} // namespace hmflow::solver
