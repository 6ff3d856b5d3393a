#pragma once

// The batch experiments behind the command-line tool and the acceptance run.
// Each suite reads a Config, builds (or loads) what it needs and returns the
// checks it ran, CSV bodies and summary data. Nothing here writes to disk
// except the kernel cache.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hmflow/config.hpp"
#include "hmflow/duhamel_solver.hpp"
#include "hmflow/green_radial.hpp"
#include "hmflow/green_verify.hpp"
#include "hmflow/hmflow.hpp"
#include "hmflow/kernel_cache.hpp"
#include "hmflow/metric_model.hpp"
#include "hmflow/oracle3d.hpp"
#include "hmflow/radial_kernel.hpp"
#include "hmflow/report.hpp"
#include "hmflow/singularity.hpp"

namespace hmflow::experiments {

using json = nlohmann::json;

/// CSV with every real at 17 significant digits.
class Csv {
public:
    explicit Csv(const std::string& header) {
        os_ << std::setprecision(17);
        os_ << header << "\n";
    }
    template <class... T>
    Csv& row(const T&... xs) {
        bool first = true;
        ((os_ << (first ? "" : ",") << xs, first = false), ...);
        os_ << "\n";
        return *this;
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

struct Context {
    std::filesystem::path cache_dir;  // empty: build every table in memory
    bool strict = false;
    unsigned seed = 1;
};

struct Report {
    std::string command;
    std::vector<Check> checks;
    std::vector<int> criterion;  // acceptance criterion per check, 0 for none
    std::vector<std::pair<std::string, std::string>> files;
    json data = json::object();
    json caches = json::array();
    bool inconclusive = false;

    void add(Check c, int crit = 0) {
        checks.push_back(std::move(c));
        criterion.push_back(crit);
    }
    void add(const std::vector<Check>& cs, int crit = 0) {
        for (const auto& c : cs) add(c, crit);
    }
    void file(std::string name, std::string body) { files.emplace_back(std::move(name), std::move(body)); }

    bool passed(bool strict) const { return all_passed(checks) && !(strict && inconclusive); }

    /// Checks tagged with one criterion.
    std::vector<Check> for_criterion(int crit) const {
        std::vector<Check> out;
        for (std::size_t i = 0; i < checks.size(); ++i)
            if (criterion[i] == crit) out.push_back(checks[i]);
        return out;
    }
};

namespace detail {

inline cache::TableSpec table_spec(const DomainSpec& d, double h, const TimeAxis& axis, double source_spacing,
                                   std::optional<double> mollifier = std::nullopt) {
    const auto g = domain_grid(d, h);
    return {d, static_cast<int>(g.size()) - 1, axis, aligned_sources(g, source_spacing), mollifier};
}

inline KernelTable table(const Context& ctx, Report& rep, const cache::TableSpec& spec, const std::string& label) {
    json entry{{"label", label}, {"domain", spec.domain.describe()}, {"key", cache::hex64(spec.key())},
               {"scheme", cache::scheme_version}};
    if (ctx.cache_dir.empty()) {
        auto t = spec.build();
        entry["content"] = cache::hex64(cache::content_hash(t));
        entry["from_cache"] = false;
        rep.caches.push_back(entry);
        return t;
    }
    auto loaded = cache::load_or_build(ctx.cache_dir, spec);
    entry["content"] = loaded.content;
    entry["from_cache"] = loaded.from_cache;
    entry["path"] = loaded.path.filename().string();
    if (!loaded.note.empty()) entry["note"] = loaded.note;
    rep.caches.push_back(entry);
    return std::move(loaded.table);
}

inline std::vector<double> grid_radii(const RadialGrid& g) {
    std::vector<double> r;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] > 0.0) r.push_back(g[i]);
    return r;
}

inline std::vector<double> uniform_times(double t1, double dt, int n) {
    std::vector<double> t;
    for (int j = 0; j <= n; ++j) t.push_back(t1 + j * dt);
    return t;
}

inline std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os << std::setprecision(6);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

} // namespace detail

// ------------------------------------------------------------------ kernels

/// Mass of the mode-0 kernel on a 10 x 10 (r, tau) lattice and the m = 3
/// closed form on a 20 x 20 x 5 lattice.
inline void kernel_checks(Report& rep) {
    double mass = 0.0;
    for (int m : {3, 5})
        for (int i = 0; i < 10; ++i)
            for (int k = 0; k < 10; ++k) {
                const double r = 0.3 * i, tau = 1e-3 * std::pow(10.0, k / 3.0);
                mass = std::max(mass, std::abs(kernel_mass(r, {m, tau}) - 1.0));
            }
    rep.add(Check::at_most("kernel mass, 10x10 (r, tau), m = 3, 5", mass, 1e-8), 1);

    double closed = 0.0;
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
            for (double tau : {1e-3, 1e-2, 0.05, 0.2, 1.0}) {
                const double r = 0.01 + i * (2.5 - 0.01) / 19.0, rp = 0.01 + j * (2.5 - 0.01) / 19.0;
                const double c = mode0_kernel_3d_closed_form(r, rp, tau);
                const double q = mode0_kernel_quadrature(r, rp, {3, tau});
                closed = std::max(closed, std::abs(q - c) / std::max(c, 1e-300));
            }
    rep.add(Check::at_most("angular quadrature vs m=3 closed form, 20x20x5", closed, 1e-10, "relative"), 2);
}

// ------------------------------------------------------------- green-verify

inline Report green_verify(const config::Config& cfg, const Context& ctx) {
    Report rep;
    rep.command = "green-verify";
    kernel_checks(rep);

    const int m = static_cast<int>(cfg.integer("green.m"));
    const double R = cfg.real("green.R"), RL = cfg.real("green.R_large"), h = cfg.real("green.h");
    const double tol = cfg.real("green.tol_discrete");
    const auto axis = TimeAxis::make(cfg.real("green.dt"), cfg.real("green.horizon"), cfg.real("green.store"));
    const double spacing = static_cast<double>(cfg.integer("green.source_cells")) * h;
    auto spec = [&](const DomainSpec& d, std::optional<double> mol = std::nullopt) {
        return detail::table_spec(d, h, axis, spacing, mol);
    };

    const auto ball = detail::table(ctx, rep, spec(DomainSpec::ball(R, m)), "ball");
    rep.add(green::check_nonnegative(ball, tol));
    rep.add(green::check_below_free(ball, tol));
    rep.add(green::check_dirichlet_rows(ball));
    rep.add(green::check_symmetry(ball, cfg.real("green.tol_sym"), cfg.real("green.sym_margin") * R));
    rep.add(green::check_flux_nonnegative(ball, tol));
    rep.add(green::check_conservation_defect(ball, cfg.real("green.tau_min"), tol));

    // Comparison chain.
    const auto large = detail::table(ctx, rep, spec(DomainSpec::ball(RL, m)), "ball R_large");
    std::vector<KernelTable> annuli;
    for (double e : cfg.reals("green.eps_sweep")) {
        std::ostringstream tag;
        tag << "annulus eps=" << e;
        annuli.push_back(detail::table(ctx, rep, spec(DomainSpec::annulus(e, R, m)), tag.str()));
        rep.add(green::check_ordering("G_{R,eps} <= G_R, eps=" + std::to_string(e), annuli.back(), ball, tol), 3);
    }
    rep.add(green::check_ordering("G_R <= G_R'", ball, large, tol), 3);
    rep.add(green::check_free_bound("G_R' <= K", large, tol), 3);

    // Mollified family: smaller delta switches the boundary data on earlier.
    std::vector<KernelTable> mol;
    Csv mcsv("delta,sup_gap_K_centre,sup_gap_K_annulus");
    const green::Window centre{0.0, 0.5 * R, cfg.real("green.delta_window_tau")};
    const green::Window middle{0.25 * R, 0.75 * R, cfg.real("green.delta_window_tau")};
    for (double d : cfg.reals("green.deltas")) {
        mol.push_back(detail::table(ctx, rep, spec(DomainSpec::ball(R, m), d), "ball delta=" + std::to_string(d)));
        rep.add(green::check_ordering("G <= G^delta, delta=" + std::to_string(d), ball, mol.back(), tol), 4);
        mcsv.row(d, green::sup_difference(mol.back(), ball, centre), green::sup_difference(mol.back(), ball, middle));
    }
    for (std::size_t i = 0; i + 1 < mol.size(); ++i) {
        const double a = *mol[i].mollifier_delta, b = *mol[i + 1].mollifier_delta;
        const auto& lo = b < a ? mol[i + 1] : mol[i];
        const auto& hi = b < a ? mol[i] : mol[i + 1];
        rep.add(green::check_ordering("G^{delta'} <= G^{delta}, " + std::to_string(std::min(a, b)) + " <= " +
                                          std::to_string(std::max(a, b)),
                                      lo, hi, tol),
                4);
    }
    {
        const double d = cfg.real("green.delta_limit");
        const auto lim = detail::table(ctx, rep, spec(DomainSpec::ball(R, m), d), "ball delta_limit");
        const double gap = green::sup_difference(lim, ball, centre);
        mcsv.row(d, gap, green::sup_difference(lim, ball, middle));
        std::ostringstream os;
        os << "r, r' <= R/2, tau >= " << centre.tau_min;
        rep.add(Check::at_most("sup |G^delta - G| at delta=" + std::to_string(d), gap, cfg.real("green.delta_limit_tol"),
                               os.str()),
                4);
        rep.add(Check::info("sup |G^delta - G| on 0.25R..0.75R", green::sup_difference(lim, ball, middle)));
        if (!annuli.empty()) {
            const double e = annuli[annuli.size() / 2].domain.inner;
            const auto a_lim = detail::table(ctx, rep, spec(DomainSpec::annulus(e, R, m), d), "annulus delta_limit");
            rep.add(Check::info("annulus eps=" + std::to_string(e) + " sup |G^delta - G|",
                                green::sup_difference(a_lim, annuli[annuli.size() / 2], middle)));
        }
    }
    rep.file("mollifier.csv", mcsv.str());

    // eps -> 0 limit.
    {
        const auto lim = green::verify_epsilon_limit(cfg.reals("green.eps_limit"), R, m, h, axis);
        rep.add(lim.checks(), 5);
        rep.add(Check::info("eps-limit capacity order m-2", lim.capacity_order));
        Csv c("eps,sup_gap");
        for (std::size_t i = 0; i < lim.eps.size(); ++i) c.row(lim.eps[i], lim.gap[i]);
        rep.file("eps_limit.csv", c.str());
        rep.data["eps_limit"] = {{"eps", lim.eps}, {"gap", lim.gap}, {"order", lim.fitted_order},
                                 {"order_stderr", lim.order_stderr}};
    }

    // Scaling identity.
    {
        const auto sc_axis = TimeAxis::make(cfg.real("green.scaling_dt"), cfg.real("green.horizon"), cfg.real("green.store"));
        const auto sc = green::verify_scaling(cfg.real("green.scaling_eps"), cfg.real("green.scaling_R"),
                                              static_cast<int>(cfg.integer("green.scaling_m")), cfg.real("green.scaling_h"),
                                              sc_axis);
        rep.add(Check::at_most("scaling identity, values", sc.value_mismatch, cfg.real("green.scaling_tol"), "relative"), 6);
        rep.add(Check::at_most("scaling identity, fluxes", sc.flux_mismatch, cfg.real("green.scaling_tol"), "relative"), 6);
    }

    // Envelopes.
    std::optional<KernelTable> exterior;
    if (cfg.flag("green.exterior")) {
        const double hx = cfg.real("green.exterior_h");
        const auto ax = TimeAxis::make(cfg.real("green.exterior_dt"), cfg.real("green.exterior_horizon"),
                                       20.0 * cfg.real("green.exterior_dt"));
        exterior = detail::table(ctx, rep,
                                 detail::table_spec(DomainSpec::exterior(cfg.real("green.exterior_R_far"), m), hx, ax, 0.25),
                                 "exterior");
        rep.add(green::check_nonnegative(*exterior, tol));
        rep.add(green::check_exterior_truncation(*exterior, {1.0, 4.0, 0.0}));
    }
    {
        std::vector<const KernelTable*> ptrs;
        for (const auto& a : annuli) ptrs.push_back(&a);
        const auto env = green::fit_envelopes(ball, ptrs, exterior ? &*exterior : nullptr);
        rep.add(env.checks(cfg.real("green.envelope_tol"), tol), 8);
        Csv c("fit,judged,C,c,C_bound,residual,samples");
        for (const auto& f : env.fits) c.row(f.name, 1, f.C, f.c, f.C_bound, f.residual, f.samples);
        for (const auto& f : env.reported) c.row(f.name, 0, f.C, f.c, f.C_bound, f.residual, f.samples);
        rep.file("envelopes.csv", c.str());
        Csv ce("eps,C_inner_flux");
        for (std::size_t i = 0; i < env.eps.size(); ++i) ce.row(env.eps[i], env.C_of_eps[i]);
        rep.file("c_of_eps.csv", ce.str());
        rep.data["C_eps_slope"] = env.C_eps_slope;

        const auto decay = green::flux_decay_probe({4.0, 8.0, 16.0}, 3, 1.0 / 16, 0.01);
        rep.add(decay.check(), 8);
        Csv cd("R,peak_outer_flux");
        for (std::size_t i = 0; i < decay.R.size(); ++i) cd.row(decay.R[i], decay.peak[i]);
        rep.file("flux_decay.csv", cd.str());
    }
    return rep;
}

// ------------------------------------------------------------ oracle-compare

inline Report oracle_compare(const config::Config& cfg, const Context& ctx) {
    Report rep;
    rep.command = "oracle-compare";
    const double R = cfg.real("oracle.R"), tau = cfg.real("oracle.tau"), step = cfg.real("oracle.target_step");
    const int N = static_cast<int>(cfg.integer("oracle.intervals"));
    const double h = R / N;
    const auto axis = TimeAxis::make(cfg.real("oracle.table_dt"), tau, tau);
    const auto sources = cfg.reals("oracle.sources");
    std::vector<double> cells_d = cfg.reals("oracle.cells");
    std::vector<int> cells;
    for (double c : cells_d) cells.push_back(static_cast<int>(std::lround(c)));

    auto nodes_of = [&](const RadialGrid& g, const std::vector<double>& radii) {
        std::vector<std::size_t> out;
        for (double r : radii) {
            const long i = std::lround((r - g.front()) / h);
            HMFLOW_REQUIRE(i >= 0 && std::abs(g[static_cast<std::size_t>(i)] - r) <= 1e-9, InvalidInput,
                           "oracle-compare: source radius is not a grid node");
            out.push_back(static_cast<std::size_t>(i));
        }
        return out;
    };

    Csv rows("domain,cells,source_radius,r,oracle,table");
    Csv summary("domain,cells,max_relative_error");
    auto run = [&](const KernelTable& t, const std::string& name, const std::vector<double>& src,
                   const std::vector<double>& targets, const std::vector<int>& levels) {
        std::vector<double> errs;
        for (int c : levels) {
            const auto r = oracle::compare_radialization(t, c, src, tau, targets, cfg.real("oracle.dt"));
            errs.push_back(r.max_relative_error());
            summary.row(name, c, errs.back());
            for (const auto& oc : r.cases)
                for (std::size_t i = 0; i < oc.radii.size(); ++i)
                    rows.row(name, c, oc.source_radius, oc.radii[i], oc.oracle[i], oc.table[i]);
        }
        return errs;
    };

    {
        const auto d = DomainSpec::ball(R, 3);
        const auto g = domain_grid(d, h);
        const auto t =
            detail::table(ctx, rep, cache::TableSpec{d, N, axis, nodes_of(g, sources), std::nullopt}, "oracle ball");
        std::vector<double> targets;
        for (int q = 0; q * step < R - 1e-12; ++q) targets.push_back(q * step);
        const auto errs = run(t, "ball", sources, targets, cells);
        rep.add(Check::at_most("ball oracle error at N3=" + std::to_string(cells.back()), errs.back(),
                               cfg.real("oracle.tol"), "relative to max |G0|"),
                7);
        bool shrinking = true;
        for (std::size_t i = 1; i < errs.size(); ++i) shrinking = shrinking && errs[i] < errs[i - 1];
        rep.add(Check::flag("ball oracle error shrinks under refinement", shrinking && errs.size() >= 2,
                            detail::join(errs)),
                7);
        rep.data["ball_errors"] = errs;
    }
    if (cfg.flag("oracle.annulus")) {
        const double e = cfg.real("oracle.annulus_eps");
        const auto d = DomainSpec::annulus(e, R, 3);
        const auto g = domain_grid(d, h);
        std::vector<double> src, targets;
        for (double r : sources)
            if (r > e + 4.0 * h) src.push_back(r);
        if (src.empty()) src.push_back(0.5 * (e + R));
        for (int q = 1; e + q * step < R - 1e-12; ++q) targets.push_back(e + q * step);
        const auto t =
            detail::table(ctx, rep, cache::TableSpec{d, static_cast<int>(g.size()) - 1, axis, nodes_of(g, src), std::nullopt},
                          "oracle annulus");
        const auto errs = run(t, "annulus", src, targets, {cells.back()});
        rep.add(Check::at_most("annulus oracle error at N3=" + std::to_string(cells.back()), errs.back(),
                               cfg.real("oracle.annulus_tol"), "relative to max |G0|"));
    }
    rep.file("oracle.csv", rows.str());
    rep.file("oracle_summary.csv", summary.str());
    return rep;
}

// ------------------------------------------------------------------ hmflow

inline MetricFamily flow_family(const config::Config& cfg) {
    const int n = static_cast<int>(cfg.integer("flow.n"));
    const double t0 = cfg.real("flow.t0"), T = cfg.real("flow.family_horizon");
    const auto name = cfg.text("flow.metric");
    const auto p = cfg.reals("flow.params");
    if (name == "euclidean") return metric::euclidean(n, t0, T);
    if (p.size() != 4) throw config::ConfigError(cfg.origin("flow.params"), "key 'flow.params': expected four coefficients");
    if (name == "smooth_bump") return metric::smooth_bump(n, t0, T, p[0], p[1], p[2], p[3]);
    if (name == "exp_bump") return metric::exp_bump(n, t0, T, p[0], p[1], p[2], p[3]);
    if (name == "cylinder_tail") return metric::cylinder_tail(n, t0, T, p[0], p[1], p[2], p[3]);
    throw config::ConfigError(cfg.origin("flow.metric"), "key 'flow.metric': unknown family '" + name + "'");
}

inline flow::FlowConfig flow_config(const config::Config& cfg) {
    flow::FlowConfig c;
    c.r_max = cfg.real("flow.r_max");
    c.intervals = static_cast<int>(cfg.integer("flow.intervals"));
    c.dt = cfg.real("flow.dt");
    c.tolerance = cfg.real("flow.tolerance");
    c.max_iterations = static_cast<int>(cfg.integer("flow.max_iterations"));
    c.norm_ceiling = cfg.real("flow.norm_ceiling");
    if (const double w = cfg.real("flow.window"); w > 0.0) c.fixed_window = w;
    return c;
}

inline json window_log(const solver::Trajectory& tr) {
    json out = json::array();
    for (const auto& w : tr.windows)
        out.push_back({{"t_start", w.t_start},
                       {"delta", w.delta},
                       {"delta1", w.delta1},
                       {"steps", w.steps},
                       {"iterations", w.iterations},
                       {"attempts", w.attempts},
                       {"contraction_ratio", w.contraction_ratio},
                       {"C1", w.C1},
                       {"C4", w.C4},
                       {"max_iterate_norm", w.max_iterate_norm},
                       {"rejections", w.rejections}});
    return out;
}

/// max over accepted windows of max_iterate_norm / (2 C1); at most 1 when the bound held.
inline double window_bound_ratio(const solver::Trajectory& tr) {
    double worst = 0.0;
    for (const auto& w : tr.windows)
        if (w.C1 > 0.0) worst = std::max(worst, w.max_iterate_norm / (2.0 * w.C1));
    return worst;
}

/// The trajectory restricted to its longest uniform tail (adaptive runs refine dt early).
inline flow::FlowSolution uniform_tail(const flow::FlowSolution& s) {
    const auto& t = s.times();
    std::size_t first = t.size() >= 2 ? t.size() - 2 : 0;
    const double dt = t.size() >= 2 ? t.back() - t[t.size() - 2] : 0.0;
    while (first > 0 && std::abs(t[first] - t[first - 1] - dt) <= 1e-9 * dt) --first;
    flow::FlowSolution out{s.metric, solver::Trajectory(s.grid())};
    for (std::size_t k = first; k < t.size(); ++k) {
        out.trajectory.times.push_back(t[k]);
        out.trajectory.values.push_back(s.trajectory.values[k]);
        out.trajectory.norms.push_back(s.trajectory.norms[k]);
    }
    return out;
}

/// alpha(t) e^{-r^2} with alpha = 0.2 sin 3t, on three refinement levels; returns max errors.
inline std::vector<double> manufactured_errors(int levels = 3) {
    const auto fam = metric::smooth_bump(3, 0.0, 0.9, 0.2, 0.1, 0.1, 0.05);
    auto alpha = [](double t) { return 0.2 * std::sin(3.0 * t); };
    const flow::Forcing forcing = [fam, alpha](double r, double t) {
        const double e = std::exp(-r * r), a = alpha(t);
        const double u = a * e, p = -2.0 * r * a * e, lap = a * (4.0 * r * r - 10.0) * e;
        return 0.6 * std::cos(3.0 * t) * e - lap - F_eval_closure(fam, r, u, p, t);
    };
    std::vector<double> errs;
    for (int k = 0; k < levels; ++k) {
        flow::FlowConfig c;
        c.intervals = 200 << k;
        c.dt = 0.02 / (1 << k);
        c.fixed_window = 0.1;
        const auto s = flow::solve(fam, 0.5, c, forcing);
        double e = 0.0;
        for (std::size_t j = 0; j < s.times().size(); ++j)
            for (std::size_t i = 0; i < s.grid().size(); ++i)
                e = std::max(e, std::abs(s.rho_tilde(j)[i] - alpha(s.times()[j]) * std::exp(-s.grid()[i] * s.grid()[i])));
        errs.push_back(e);
    }
    return errs;
}

inline void manufactured_checks(Report& rep) {
    const auto e = manufactured_errors(3);
    Csv c("level,max_error");
    for (std::size_t k = 0; k < e.size(); ++k) c.row(k, e[k]);
    rep.file("manufactured.csv", c.str());
    const double o1 = std::log2(e[0] / e[1]), o2 = std::log2(e[1] / e[2]);
    rep.add(Check::at_least("manufactured order, levels 0-1", o1, 1.5, detail::join(e)), 11);
    rep.add(Check::at_least("manufactured order, levels 1-2", o2, 1.5), 11);
}

inline Report hmflow_run(const config::Config& cfg, const Context& ctx) {
    (void)ctx;
    Report rep;
    rep.command = "hmflow-run";
    const auto fam = flow_family(cfg);
    const auto fc = flow_config(cfg);
    const auto sol = flow::solve(fam, cfg.real("flow.horizon"), fc);
    const auto& g = sol.grid();

    bool identity = true;
    for (double x : sol.rho_tilde(0)) identity = identity && x == 0.0;
    const auto rho0 = sol.rho(0);
    for (std::size_t i = 0; i < g.size(); ++i) identity = identity && rho0[i] == g[i];
    rep.add(Check::flag("rho(r, t0) = r", identity));
    bool origin = true;
    for (std::size_t k = 0; k < sol.times().size(); ++k) origin = origin && sol.rho(k)[0] == 0.0;
    rep.add(Check::flag("rho(0, t) = 0", origin));
    // Strictly increasing wherever 1 + r rho~_r > 0.
    bool monotone = true;
    for (std::size_t k = 0; k < sol.times().size(); ++k) {
        const auto rho = sol.rho(k);
        const auto& u = sol.rho_tilde(k);
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            const double rm = 0.5 * (g[i] + g[i + 1]);
            if (1.0 + rm * (u[i + 1] - u[i]) / (g[i + 1] - g[i]) > 0.0) monotone = monotone && rho[i + 1] > rho[i];
        }
    }
    rep.add(Check::flag("rho increasing where 1 + r rho~_r > 0", monotone));
    rep.add(Check::at_most("window bound, max iterate norm / 2 C1", window_bound_ratio(sol.trajectory), 1.0), 10);

    double sup = 0.0;
    for (const auto& v : sol.trajectory.values) sup = std::max(sup, sup_norm(v));
    if (fam.name.rfind("euclidean", 0) == 0)
        rep.add(Check::at_most("Euclidean sup |rho~|", sup, cfg.real("flow.euclidean_tol")), 9);
    rep.add(Check::info("sup |rho~|", sup));
    rep.add(Check::info("T0", sol.T0(), sol.trajectory.blew_up ? "numerical blow-up" : "horizon reached"));

    const auto tail = uniform_tail(sol);
    double res_sup = 0.0;
    if (tail.times().size() >= 3) {
        res_sup = flow::residual(tail).sup(g, 0.5 * g.back());
        std::ostringstream os;
        os << "r <= r_max/2, uniform tail from t=" << tail.times().front();
        rep.add(Check::info("residual sup", res_sup, os.str()));
    }
    if (cfg.flag("flow.direct_check")) {
        const auto d = flow::direct_solve(fam, cfg.real("flow.horizon"), fc);
        rep.add(Check::info("lift vs direct 1-D solve, final time", sup_gap(d.values.back(), sol.rho_tilde(sol.times().size() - 1))));
    }
    if (cfg.flag("flow.manufactured")) manufactured_checks(rep);

    Csv traj("t,r,rho_tilde,rho,norm");
    for (std::size_t k = 0; k < sol.times().size(); ++k) {
        const auto rho = sol.rho(k);
        for (std::size_t i = 0; i < g.size(); ++i)
            traj.row(sol.times()[k], g[i], sol.rho_tilde(k)[i], rho[i], sol.trajectory.norms[k]);
    }
    rep.file("trajectory.csv", traj.str());
    Csv norms("t,norm");
    for (std::size_t k = 0; k < sol.times().size(); ++k) norms.row(sol.times()[k], sol.trajectory.norms[k]);
    rep.file("norms.csv", norms.str());
    rep.data["metric"] = fam.name;
    rep.data["T0"] = sol.T0();
    rep.data["blew_up"] = sol.trajectory.blew_up;
    rep.data["stop_reason"] = sol.trajectory.stop_reason;
    rep.data["windows"] = window_log(sol.trajectory);
    rep.data["residual_sup"] = res_sup;
    return rep;
}

// -------------------------------------------------------------- uniqueness

inline Report uniqueness_test(const config::Config& cfg, const Context& ctx) {
    Report rep;
    rep.command = "uniqueness-test";
    const auto fam = flow_family(cfg);
    const double T = cfg.real("flow.horizon"), tol = cfg.real("uniqueness.tolerance");
    const double amp = cfg.real("uniqueness.perturbation");
    auto fc = flow_config(cfg);
    fc.fixed_window = cfg.real("uniqueness.window");

    // Two first-guess perturbations drawn from the seed: amp * s * exp(-r^2 / w).
    std::mt19937 rng(ctx.seed);
    std::uniform_real_distribution<double> width(0.5, 2.0);
    auto draw = [&](double sign) {
        const double w = width(rng);
        return solver::GuessPerturbation([=](double r, double) { return sign * amp * std::exp(-r * r / w); });
    };
    auto a_cfg = fc, b_cfg = fc;
    a_cfg.perturb = draw(1.0);
    b_cfg.perturb = draw(-1.0);
    const auto plain = flow::solve(fam, T, fc);
    const auto again = flow::solve(fam, T, fc);
    const auto a = flow::solve(fam, T, a_cfg);
    const auto b = flow::solve(fam, T, b_cfg);
    const auto same = solver::uniqueness_gap(plain.trajectory, again.trajectory);
    rep.add(Check::at_most("identical runs, E(T')", same.final_gap(), 0.0));
    const auto gap = solver::uniqueness_gap(a.trajectory, b.trajectory);
    std::ostringstream os;
    os << "perturbations +-" << amp << ", seed " << ctx.seed;
    rep.add(Check::at_most("perturbed first guesses, E(T')", gap.final_gap(), tol, os.str()), 12);
    rep.add(Check::at_most("perturbed vs plain, E(T')", solver::uniqueness_gap(plain.trajectory, a.trajectory).final_gap(), tol), 12);
    Csv e("t,E");
    for (std::size_t k = 0; k < gap.times.size(); ++k) e.row(gap.times[k], gap.E[k]);
    rep.file("uniqueness_E.csv", e.str());

    for (const auto* s : {&plain, &a, &b})
        rep.add(Check::at_most("window bound, max iterate norm / 2 C1", window_bound_ratio(s->trajectory), 1.0), 10);

    // Restart: [t0, t1] then on to T equals the direct run.
    {
        const auto sc = fc.solver_config(fam.n);
        const auto F = flow::lifted_source(fam);
        const double t1 = cfg.real("uniqueness.restart_at");
        solver::ContinueOptions opt;
        opt.fixed_window = fc.fixed_window;
        const std::vector<double> zero(sc.grid.size(), 0.0);
        const auto head = solver::continue_to_blowup(zero, fam.t0, t1, F, sc, opt);
        const auto tail = solver::continue_to_blowup(head.values.back(), t1, T, F, sc, opt);
        const double g_tail = solver::uniqueness_gap(plain.trajectory, tail).final_gap();
        const double g_head = solver::uniqueness_gap(plain.trajectory, head).final_gap();
        rep.add(Check::at_most("restart at t1 vs direct run", std::max(g_tail, g_head), tol), 9);
    }

    // Contraction ratio against window length from zero data at t0.
    {
        auto sc = fc.solver_config(fam.n);
        sc.tolerance = 1e-14;
        sc.policy.enforce_bound = false;
        solver::OperatorCache cache(sc.grid);
        const auto F = flow::lifted_source(fam);
        const std::vector<double> zero(sc.grid.size(), 0.0);
        Csv c("delta,contraction_ratio,iterations");
        std::vector<double> ratios;
        for (double d : cfg.reals("uniqueness.deltas")) {
            const auto res = solver::solve_window(zero, fam.t0, d, F, sc, cache, 1.0);
            ratios.push_back(res.contraction_ratio);
            c.row(d, res.contraction_ratio, res.iterations);
        }
        rep.file("contraction.csv", c.str());
        for (std::size_t i = 1; i < ratios.size(); ++i)
            rep.add(Check::at_most("contraction ratio after quartering the window", ratios[i] / ratios[i - 1], 0.5,
                                   detail::join(ratios)),
                    10);
        rep.data["contraction_ratios"] = ratios;
    }
    rep.data["E_final"] = gap.final_gap();
    rep.data["windows"] = window_log(a.trajectory);
    return rep;
}

// ------------------------------------------------------------- singularity

inline json classification_json(const singular::Classification& c, const std::string& label) {
    return {{"label", label},
            {"verdict", singular::verdict_name(c.verdict)},
            {"growth", {{"p", c.growth.p}, {"stderr", c.growth.stderr_p}, {"ci", {c.growth.ci_lo, c.growth.ci_hi}},
                        {"bounded", c.growth.bounded}, {"satisfied", c.growth.satisfied}, {"radii", c.growth.radii_used}}},
            {"reconstruction_gap", c.reconstruction_gap},
            {"reconstruction_bounded", c.reconstruction_bounded},
            {"origin_value", c.origin_value},
            {"reason", c.reason}};
}

inline Report singularity_classify(const config::Config& cfg, const Context& ctx) {
    using namespace singular;
    Report rep;
    rep.command = "singularity-classify";
    const int m = static_cast<int>(cfg.integer("singularity.m"));
    const double R = cfg.real("singularity.R"), h = cfg.real("singularity.h"), dt = cfg.real("singularity.dt");
    const double horizon = cfg.real("singularity.horizon"), t1 = cfg.real("singularity.t1");
    const auto axis = TimeAxis::make(dt, horizon, cfg.real("singularity.store"));
    const auto ball = detail::table(ctx, rep, detail::table_spec(DomainSpec::ball(R, m), h, axis, 8.0 * h), "ball");
    ClassifyOptions opt;
    opt.slack = cfg.real("singularity.slack");
    opt.tolerance = cfg.real("singularity.tolerance");
    opt.singular_factor = cfg.real("singularity.singular_factor");
    opt.annulus_lo = cfg.real("singularity.annulus_lo");
    opt.annulus_hi = cfg.real("singularity.annulus_hi");

    const auto radii = detail::grid_radii(ball.grid);
    const int steps = static_cast<int>(std::lround(horizon / dt));
    const auto times = detail::uniform_times(t1, dt, steps);
    auto sample = [&](const CaloricFn& u, const std::string& label) {
        return PuncturedSample::from_function(m, R, radii, times, u, label);
    };
    // Growth only: a decade of radii below R/4, fine in time so the pulse peak is resolved.
    auto growth_sample = [&](const CaloricFn& u) {
        std::vector<double> r;
        for (int i = 0; i <= 40; ++i) r.push_back(0.025 * R * std::pow(10.0, i / 40.0));
        r.push_back(0.5 * R);
        r.push_back(R);
        return PuncturedSample::from_function(m, R, r, detail::uniform_times(t1, 1e-5, static_cast<int>(horizon / 1e-5 / 2)),
                                              u, "growth");
    };

    json classes = json::array();
    Csv growth("label,p,stderr,ci_lo,ci_hi,satisfied,reconstruction_gap,verdict");
    auto record = [&](const Classification& c, const std::string& label) {
        classes.push_back(classification_json(c, label));
        growth.row(label, c.growth.p, c.growth.stderr_p, c.growth.ci_lo, c.growth.ci_hi, c.growth.satisfied ? 1 : 0,
                   c.reconstruction_gap, verdict_name(c.verdict));
        if (c.verdict == Verdict::inconclusive) rep.inconclusive = true;
    };

    {
        const auto one = sample([](double, double) { return 1.0; }, "one");
        const auto rec = reconstruct(one, ball);
        rep.add(Check::at_most("u = 1 reconstructed", rec.relative_gap(one, opt.annulus_lo * R, opt.annulus_hi * R), 1e-4,
                               "test annulus"));
    }
    {
        const auto gauss = classify(sample(family::shifted_gaussian(m), "shifted_gaussian"), ball, opt);
        record(gauss, "shifted_gaussian");
        rep.add(Check::flag("shifted Gaussian removable", gauss.verdict == Verdict::removable, gauss.reason), 13);
        rep.add(Check::at_most("shifted Gaussian reconstruction gap", gauss.reconstruction_gap, opt.tolerance), 13);
    }
    {
        const double t_star = t1 + 0.2 * horizon;
        const auto pulse = classify(sample(family::pulse(m, t_star), "pulse"), ball, opt);
        record(pulse, "pulse");
        rep.add(Check::flag("pulse singular", pulse.verdict == Verdict::singular, pulse.reason), 13);
        const auto fit = growth_exponent(growth_sample(family::pulse(m, t_star)), opt.slack);
        rep.add(Check::at_most("pulse growth exponent vs m", std::abs(fit.p - m) / m, 0.05,
                               "p=" + std::to_string(fit.p)),
                13);
    }

    // The critical datum |x|^{2-m}: the growth bound holds, the reconstruction misses
    // the point source. Logged with the inner-boundary terms; see the probe CSV.
    std::vector<KernelTable> annuli;
    for (double e : cfg.reals("singularity.probe_eps"))
        annuli.push_back(detail::table(ctx, rep, detail::table_spec(DomainSpec::annulus(e, R, m), h, axis, 8.0 * h),
                                       "annulus eps=" + std::to_string(e)));
    std::vector<const KernelTable*> ptrs;
    for (const auto& a : annuli) ptrs.push_back(&a);
    const double target = cfg.real("singularity.probe_target"), ptau = cfg.real("singularity.probe_tau");
    {
        const auto fund = classify(sample(family::fundamental(m), "fundamental"), ball, opt);
        record(fund, "fundamental");
        const auto fit = growth_exponent(growth_sample(family::fundamental(m)), opt.slack);
        rep.add(Check::info("|x|^{2-m} growth exponent", fit.p, fit.satisfied ? "growth bound holds" : "growth bound fails"), 13);
        rep.add(Check::info("|x|^{2-m} reconstruction gap", fund.reconstruction_gap,
                            std::string("verdict ") + verdict_name(fund.verdict)),
                13);

        auto probe = probe_inner_term(family::fundamental(m), t1, ptrs, target, ptau, "fundamental");
        probe.ball_value = ball_representation(family::fundamental(m), t1, ball, target, ptau);
        rep.file("probe_fundamental.csv", probe.log());
        bool reassembled = probe.terms.size() == ptrs.size();
        for (const auto& t : probe.terms) reassembled = reassembled && std::abs(t.sum() - t.u) <= 1e-2 * std::abs(t.u);
        rep.add(Check::flag("|x|^{2-m} probe: I1 + I2 + I3 reassemble u", reassembled, "within 1%"), 13);
        rep.add(Check::info("|x|^{2-m} probe: I2 limit u - ball value", probe.terms.front().u - *probe.ball_value));
        rep.add(Check::at_least("inner term decay order, |u| <= r^{2-m}", probe.I2_order, cfg.real("singularity.probe_order"),
                                "u = r^{2-m}, tau=" + std::to_string(ptau)),
                14);
        rep.data["probe_fundamental"] = {{"I2_order", probe.I2_order}, {"I2_order_stderr", probe.I2_order_stderr},
                                         {"ball_value", *probe.ball_value}};
        json terms = json::array();
        for (const auto& t : probe.terms)
            terms.push_back({{"eps", t.eps}, {"I1", t.I1}, {"I2", t.I2}, {"I3", t.I3}, {"u", t.u}});
        rep.data["probe_fundamental"]["terms"] = terms;
    }
    {
        const auto gp = probe_inner_term(family::shifted_gaussian(m), t1, ptrs, target, ptau, "shifted_gaussian");
        rep.file("probe_gaussian.csv", gp.log());
        rep.add(Check::info("inner term decay order, shifted Gaussian", gp.I2_order), 14);
        const double early = std::min(ptau, 0.1 * horizon);
        const auto fe = probe_inner_term(family::fundamental(m), t1, ptrs, target, early, "fundamental_early");
        rep.file("probe_fundamental_early.csv", fe.log());
        rep.add(Check::info("inner term decay order, r^{2-m}, tau=" + std::to_string(early), fe.I2_order), 14);
    }

    if (const auto path = cfg.text("singularity.sample"); !path.empty()) {
        std::ifstream is(path);
        if (!is) throw config::ConfigError(cfg.origin("singularity.sample"), "cannot open sample '" + path + "'");
        const auto s = PuncturedSample::from_csv(is, m, R, std::filesystem::path(path).filename().string());
        const auto c = classify(s, ball, opt);
        record(c, s.label);
        rep.add(Check::info("external sample verdict", static_cast<double>(c.verdict), verdict_name(c.verdict)));
    }
    rep.file("growth.csv", growth.str());
    rep.file("classification.json", classes.dump(2) + "\n");
    rep.data["classifications"] = classes;
    return rep;
}

} // namespace hmflow::experiments
