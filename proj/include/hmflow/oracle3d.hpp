#pragma once

// Brute-force three-dimensional Dirichlet heat solver on a ball or annulus
// embedded in a cube, used to check the radial Green tables.
//
// Space: 7-point Laplacian with Shortley-Weller distances where a stencil arm
// crosses the boundary sphere. Time: Crank-Nicolson after two implicit Euler
// half steps. Linear systems: BiCGSTAB with a diagonal preconditioner.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <vector>

#include "hmflow/error.hpp"
#include "hmflow/green_radial.hpp"
#include "hmflow/radial_kernel.hpp"

namespace hmflow::oracle {

using Point = std::array<double, 3>;
using SpaceTimeFn = std::function<double(const Point&, double t)>;
using SpaceFn = std::function<double(const Point&)>;

/// Nodes x_i = -L + i h, h = 2L / N3, on each axis; N3 even so the origin is a node.
class Grid3D {
public:
    Grid3D(double half_width, int cells, DomainSpec domain) : L_(half_width), n_(cells), domain_(domain) {
        HMFLOW_REQUIRE(cells >= 4 && cells % 2 == 0 && cells <= 64, InvalidInput,
                       "Grid3D: cells per axis must be even and at most 64");
        HMFLOW_REQUIRE(domain.m == 3, DomainError, "Grid3D: the oracle is three-dimensional");
        HMFLOW_REQUIRE(domain.kind != DomainKind::exterior, InvalidInput, "Grid3D: exterior domains not supported");
        HMFLOW_REQUIRE(half_width >= domain.outer, InvalidInput, "Grid3D: cube must contain the domain");
        h_ = 2.0 * L_ / n_;
    }

    int cells() const { return n_; }
    int points() const { return n_ + 1; }
    double spacing() const { return h_; }
    double half_width() const { return L_; }
    const DomainSpec& domain() const { return domain_; }
    double coord(int i) const { return -L_ + i * h_; }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * points() + j) * points() + k;
    }
    std::size_t size() const { return static_cast<std::size_t>(points()) * points() * points(); }
    Point node(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }

    bool inside(const Point& x) const {
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        if (r >= domain_.outer) return false;
        return !domain_.has_inner_boundary() || r > domain_.inner;
    }

private:
    double L_;
    int n_;
    double h_;
    DomainSpec domain_;
};

/// Snapshots on all cube nodes. Nodes outside the domain hold the boundary data
/// at the snapshot time, which keeps trilinear interpolation smooth near the boundary.
struct Trajectory3D {
    Grid3D grid;
    std::vector<double> times;
    std::vector<std::vector<double>> fields;

    double sample(std::size_t snap, const Point& x) const {
        const auto& f = fields[snap];
        const double h = grid.spacing();
        std::array<int, 3> i0{};
        std::array<double, 3> w{};
        for (int a = 0; a < 3; ++a) {
            double s = (x[a] + grid.half_width()) / h;
            HMFLOW_REQUIRE(s >= -1e-12 && s <= grid.cells() + 1e-12, DomainError, "Trajectory3D: point outside cube");
            int i = static_cast<int>(std::floor(s));
            i = std::clamp(i, 0, grid.cells() - 1);
            i0[a] = i;
            w[a] = s - i;
        }
        double v = 0.0;
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
                for (int dk = 0; dk < 2; ++dk) {
                    const double c = (di ? w[0] : 1 - w[0]) * (dj ? w[1] : 1 - w[1]) * (dk ? w[2] : 1 - w[2]);
                    v += c * f[grid.index(i0[0] + di, i0[1] + dj, i0[2] + dk)];
                }
        return v;
    }

    /// Mean over a Fibonacci lattice on the sphere of radius r.
    double sphere_average(std::size_t snap, double r, int count = 400) const {
        if (r == 0.0) return sample(snap, {0.0, 0.0, 0.0});
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        double sum = 0.0;
        for (int q = 0; q < count; ++q) {
            const double z = 1.0 - (2.0 * q + 1.0) / count;
            const double rho = std::sqrt(1.0 - z * z);
            const double phi = golden * q;
            sum += sample(snap, {r * rho * std::cos(phi), r * rho * std::sin(phi), r * z});
        }
        return sum / count;
    }
};

struct SolveOptions {
    double dt = 1e-3;
    std::vector<double> snapshot_times;  // multiples of dt; last one is the horizon
    double tolerance = 1e-10;
};

namespace detail {

struct Stencil {
    std::vector<std::size_t> unknown_of;  // cube node -> unknown index or npos
    std::vector<std::size_t> node_of;     // unknown -> cube node
    std::vector<Eigen::Triplet<double>> lap;
    // Boundary contributions: L u_p += coeff * b(point, t).
    std::vector<std::vector<std::pair<Point, double>>> bnd;
};

inline Stencil build_stencil(const Grid3D& g) {
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    Stencil st;
    st.unknown_of.assign(g.size(), npos);
    const int P = g.points();
    for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j)
            for (int k = 0; k < P; ++k)
                if (g.inside(g.node(i, j, k))) {
                    st.unknown_of[g.index(i, j, k)] = st.node_of.size();
                    st.node_of.push_back(g.index(i, j, k));
                }
    st.bnd.resize(st.node_of.size());
    const double h = g.spacing();
    const auto& d = g.domain();
    for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j)
            for (int k = 0; k < P; ++k) {
                const std::size_t p = st.unknown_of[g.index(i, j, k)];
                if (p == npos) continue;
                const Point x = g.node(i, j, k);
                const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                const std::array<int, 3> ijk{i, j, k};
                double diag = 0.0;
                for (int a = 0; a < 3; ++a) {
                    // Arm lengths and targets on both sides along axis a.
                    std::array<double, 2> len{};
                    std::array<std::size_t, 2> col{};
                    std::array<Point, 2> hit{};
                    for (int side = 0; side < 2; ++side) {
                        const int sg = side ? 1 : -1;
                        auto nb = ijk;
                        nb[a] += sg;
                        const std::size_t q = st.unknown_of[g.index(nb[0], nb[1], nb[2])];
                        if (q != npos) {
                            len[side] = h;
                            col[side] = q;
                            continue;
                        }
                        // Crossing of x + s sg e_a with a boundary sphere, smallest s in (0, h].
                        double s_best = h;
                        auto consider = [&](double rho, bool outer) {
                            const double disc = x[a] * x[a] - (r2 - rho * rho);
                            if (disc < 0.0) return;
                            const double sq = std::sqrt(disc);
                            const double s = outer ? -sg * x[a] + sq : -sg * x[a] - sq;
                            if (s > 0.0 && s <= s_best) s_best = s;
                        };
                        consider(d.outer, true);
                        if (d.has_inner_boundary()) consider(d.inner, false);
                        len[side] = std::max(s_best, 1e-6 * h);
                        col[side] = npos;
                        hit[side] = x;
                        hit[side][a] += sg * len[side];
                    }
                    const double scale = 2.0 / (len[0] + len[1]);
                    for (int side = 0; side < 2; ++side) {
                        const double c = scale / len[side];
                        diag -= c;
                        if (col[side] != npos)
                            st.lap.emplace_back(static_cast<int>(p), static_cast<int>(col[side]), c);
                        else
                            st.bnd[p].emplace_back(hit[side], c);
                    }
                }
                st.lap.emplace_back(static_cast<int>(p), static_cast<int>(p), diag);
            }
    return st;
}

} // namespace detail

/// Dirichlet problem u_t = Laplacian u on the masked domain, u = boundary on its
/// boundary, u(., 0) = initial.
inline Trajectory3D heat_solve_3d(const Grid3D& grid, const SpaceFn& initial, const SpaceTimeFn& boundary,
                                  const SolveOptions& opt) {
    using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
    HMFLOW_REQUIRE(opt.dt > 0.0 && !opt.snapshot_times.empty(), InvalidInput,
                   "heat_solve_3d: need dt > 0 and at least one snapshot");
    std::vector<int> snap_steps;
    for (double t : opt.snapshot_times) {
        const long n = std::lround(t / opt.dt);
        HMFLOW_REQUIRE(n >= 1 && std::abs(n * opt.dt - t) <= 1e-9 * t, InvalidInput,
                       "heat_solve_3d: snapshot times must be positive multiples of dt");
        HMFLOW_REQUIRE(snap_steps.empty() || n > snap_steps.back(), InvalidInput,
                       "heat_solve_3d: snapshot times must increase");
        snap_steps.push_back(static_cast<int>(n));
    }
    const auto st = detail::build_stencil(grid);
    const std::size_t U = st.node_of.size();
    HMFLOW_REQUIRE(U > 0, InvalidInput, "heat_solve_3d: domain contains no grid nodes");

    SpMat L(static_cast<int>(U), static_cast<int>(U));
    L.setFromTriplets(st.lap.begin(), st.lap.end());
    SpMat I(static_cast<int>(U), static_cast<int>(U));
    I.setIdentity();
    const double c = 0.5 * opt.dt;
    const SpMat A = I - c * L;

    Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setTolerance(opt.tolerance);
    solver.setMaxIterations(2000);
    solver.compute(A);
    HMFLOW_REQUIRE(solver.info() == Eigen::Success, ConvergenceError, "heat_solve_3d: preconditioner setup failed");

    auto boundary_term = [&](double t) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<int>(U));
        for (std::size_t p = 0; p < U; ++p)
            for (const auto& [pt, coeff] : st.bnd[p]) b[static_cast<int>(p)] += coeff * boundary(pt, t);
        return b;
    };
    auto solve = [&](const Eigen::VectorXd& rhs, const Eigen::VectorXd& guess, double t) {
        Eigen::VectorXd x = solver.solveWithGuess(rhs, guess);
        if (solver.info() != Eigen::Success) {
            std::ostringstream os;
            os << "heat_solve_3d: BiCGSTAB did not converge at t=" << t << " (error " << solver.error() << ")";
            throw ConvergenceError(os.str());
        }
        return x;
    };

    Eigen::VectorXd u(static_cast<int>(U));
    for (std::size_t p = 0; p < U; ++p) {
        const std::size_t node = st.node_of[p];
        const int P = grid.points();
        const int i = static_cast<int>(node / (static_cast<std::size_t>(P) * P));
        const int j = static_cast<int>((node / P) % P);
        const int k = static_cast<int>(node % P);
        u[static_cast<int>(p)] = initial(grid.node(i, j, k));
    }

    Trajectory3D traj{grid, {}, {}};
    auto snapshot = [&](double t) {
        std::vector<double> f(grid.size());
        const int P = grid.points();
        for (int i = 0; i < P; ++i)
            for (int j = 0; j < P; ++j)
                for (int k = 0; k < P; ++k) {
                    const std::size_t node = grid.index(i, j, k);
                    const std::size_t p = st.unknown_of[node];
                    f[node] = p == static_cast<std::size_t>(-1) ? boundary(grid.node(i, j, k), t)
                                                                : u[static_cast<int>(p)];
                }
        traj.times.push_back(t);
        traj.fields.push_back(std::move(f));
    };

    const int steps = snap_steps.back();
    std::size_t next_snap = 0;
    Eigen::VectorXd b_old = boundary_term(0.0);
    for (int n = 1; n <= steps; ++n) {
        const double t0 = (n - 1) * opt.dt;
        const double t1 = n * opt.dt;
        if (n == 1) {
            // Two implicit Euler half steps: (I - (dt/2) L) u = u_old + (dt/2) b.
            u = solve(u + c * boundary_term(t0 + 0.5 * opt.dt), u, t0 + 0.5 * opt.dt);
            Eigen::VectorXd b1 = boundary_term(t1);
            u = solve(u + c * b1, u, t1);
            b_old = std::move(b1);
        } else {
            Eigen::VectorXd b_new = boundary_term(t1);
            const Eigen::VectorXd rhs = u + c * (L * u) + c * (b_old + b_new);
            u = solve(rhs, u, t1);
            b_old = std::move(b_new);
        }
        if (next_snap < snap_steps.size() && n == snap_steps[next_snap]) {
            snapshot(t1);
            ++next_snap;
        }
    }
    return traj;
}

struct OracleCase {
    double source_radius;
    double tau;
    std::vector<double> radii;      // targets r, grid nodes of the table
    std::vector<double> oracle;     // K - sphere average of the 3-D complement
    std::vector<double> table;      // G0 from the radial table
    double max_abs_error = 0.0;
    double scale = 0.0;             // max |G0| over the compared radii
    double relative_error() const { return scale > 0.0 ? max_abs_error / scale : 0.0; }
};

struct RadializationReport {
    int cells = 0;
    std::vector<OracleCase> cases;
    double max_relative_error() const {
        double e = 0.0;
        for (const auto& c : cases) e = std::max(e, c.relative_error());
        return e;
    }
};

/// For each source radius, solves the 3-D complement with data Gamma(x, y; t),
/// y = (0, 0, r'), and compares K(r, r'; tau) minus its average over |x| = r
/// with the table column G0(r, r'; tau).
inline RadializationReport compare_radialization(const KernelTable& table, int cells,
                                                 const std::vector<double>& source_radii, double tau,
                                                 const std::vector<double>& target_radii, double dt = 1e-3) {
    const auto& d = table.domain;
    HMFLOW_REQUIRE(d.m == 3, DomainError, "compare_radialization: tables must be three-dimensional");
    const std::size_t k = table.axis.find_time(tau);
    HMFLOW_REQUIRE(k != static_cast<std::size_t>(-1), InvalidInput, "compare_radialization: tau is not a table time");
    const Grid3D grid(d.outer, cells, d);
    RadializationReport rep;
    rep.cells = cells;
    for (double rp : source_radii) {
        const std::size_t s = table.find_source(rp);
        HMFLOW_REQUIRE(s != static_cast<std::size_t>(-1), InvalidInput,
                       "compare_radialization: source radius is not a table source");
        const Point y{0.0, 0.0, rp};
        auto gamma = [&](const Point& x, double t) {
            if (t <= 0.0) return 0.0;
            const double d2 = x[0] * x[0] + x[1] * x[1] + (x[2] - y[2]) * (x[2] - y[2]);
            return eval_gamma(d2, {3, t});
        };
        SolveOptions opt;
        opt.dt = dt;
        opt.snapshot_times = {tau};
        const auto traj = heat_solve_3d(grid, [](const Point&) { return 0.0; }, gamma, opt);
        OracleCase oc{rp, tau, {}, {}, {}};
        for (double r : target_radii) {
            const std::size_t i = table.find_node(r);
            HMFLOW_REQUIRE(i != static_cast<std::size_t>(-1), InvalidInput,
                           "compare_radialization: target radius is not a grid node");
            const double est = mode0_kernel(r, rp, {3, tau}) - traj.sphere_average(0, r);
            const double ref = table.value(i, s, k);
            oc.radii.push_back(r);
            oc.oracle.push_back(est);
            oc.table.push_back(ref);
            oc.max_abs_error = std::max(oc.max_abs_error, std::abs(est - ref));
            oc.scale = std::max(oc.scale, std::abs(ref));
        }
        rep.cases.push_back(std::move(oc));
    }
    return rep;
}

} // namespace hmflow::oracle
