// Acceptance run: every suite at its default configuration, one PASS/FAIL line
// per criterion. A criterion passes when it has at least one judged check and
// all of them pass. Exit status 0 only when all fourteen pass.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include "CLI11.hpp"

#include "hmflow/config.hpp"
#include "hmflow/experiments.hpp"
#include "hmflow/parallel.hpp"

namespace ex = hmflow::experiments;

namespace {

const std::map<int, std::string> titles{
    {1, "mode-0 kernel has unit mass"},
    {2, "angular quadrature matches the m=3 closed form"},
    {3, "domain monotonicity chain G_{R,eps} <= G_R <= G_R' <= K"},
    {4, "mollified kernels decrease to G as delta -> 0"},
    {5, "annulus kernels converge to the ball kernel as eps -> 0"},
    {6, "parabolic scaling identity"},
    {7, "radialized 3-D oracle agreement"},
    {8, "Gaussian envelopes and flux decay"},
    {9, "Euclidean metric is stationary and restarts are consistent"},
    {10, "window bound and contraction of the Picard map"},
    {11, "manufactured solution converges at order >= 1.5"},
    {12, "solutions are independent of the first guess"},
    {13, "removable vs singular classification"},
    {14, "inner boundary term vanishes at order >= 0.9 for |u| <= r^{2-m}"},
};

struct Run {
    std::string name;
    std::function<ex::Report(const hmflow::config::Config&, const ex::Context&)> suite;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::set<int> criteria;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string cache_dir;
    std::vector<int> only;
    bool verbose = false;
    int threads = 0;
    app.add_option("--cache-dir", cache_dir, "kernel table cache directory");
    app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 14));
    app.add_option("--threads", threads, "worker threads, 0 = all cores");
    app.add_flag("-v,--verbose", verbose, "print every check");
    CLI11_PARSE(app, argc, argv);

    hmflow::parallel::set_threads(threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    ex::Context ctx;
    ctx.cache_dir = cache_dir;

    const std::vector<Run> runs{
        {"green-verify", ex::green_verify, {}, {1, 2, 3, 4, 5, 6, 8}},
        {"oracle-compare", ex::oracle_compare, {}, {7}},
        {"hmflow-run euclidean", ex::hmflow_run, {{"flow.metric", "euclidean"}, {"flow.manufactured", "true"}}, {9, 10, 11}},
        {"hmflow-run", ex::hmflow_run, {}, {10}},
        {"uniqueness-test", ex::uniqueness_test, {}, {9, 10, 12}},
        {"singularity-classify", ex::singularity_classify, {}, {13, 14}},
    };
    const std::set<int> wanted = only.empty() ? std::set<int>{} : std::set<int>(only.begin(), only.end());

    std::map<int, std::vector<hmflow::Check>> by_criterion;
    std::map<int, std::string> errors;
    for (const auto& run : runs) {
        bool needed = wanted.empty();
        for (int c : run.criteria) needed = needed || wanted.count(c);
        if (!needed) continue;
        auto cfg = hmflow::config::Config::defaults();
        for (const auto& [k, v] : run.overrides) cfg.set(k, v, "acceptance");
        const auto start = std::chrono::steady_clock::now();
        try {
            const auto rep = run.suite(cfg, ctx);
            for (std::size_t i = 0; i < rep.checks.size(); ++i)
                if (rep.criterion[i] > 0) by_criterion[rep.criterion[i]].push_back(rep.checks[i]);
            if (verbose)
                for (const auto& c : rep.checks) std::cout << "    " << run.name << ": " << c.line() << "\n";
        } catch (const std::exception& e) {
            for (int c : run.criteria) errors[c] += run.name + ": " + e.what() + "; ";
        }
        std::cout << "  [" << run.name << " "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s]\n";
    }

    int failed = 0;
    for (const auto& [id, title] : titles) {
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto& checks = by_criterion[id];
        int judged = 0, bad = 0;
        std::string first_bad;
        for (const auto& c : checks) {
            if (c.exploratory) continue;
            ++judged;
            if (!c.passed) {
                if (!bad) first_bad = c.line();
                ++bad;
            }
        }
        const bool ok = judged > 0 && bad == 0 && !errors.count(id);
        failed += ok ? 0 : 1;
        std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << "  [" << judged - bad << "/"
                  << judged << " checks]";
        if (errors.count(id)) std::cout << "  error: " << errors[id];
        else if (!ok) std::cout << "  first failure: " << (judged ? first_bad : "no judged checks");
        std::cout << "\n";
    }
    std::cout << (failed ? "FAILED" : "PASSED") << "  " << failed << " criteria failed\n";
    return failed ? 1 : 0;
}
