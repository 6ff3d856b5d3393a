// hmflow: batch front end for the kernel, flow and singularity experiments.
//
// Exit status: 0 all checks passed, 1 a check failed (or an inconclusive
// verdict under --strict), 2 configuration error, 3 any other failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmflow/config.hpp"
#include "hmflow/experiments.hpp"
#include "hmflow/parallel.hpp"

namespace fs = std::filesystem;
using hmflow::experiments::Report;
using nlohmann::json;

namespace {

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << body;
}

std::string checks_csv(const Report& rep) {
    hmflow::experiments::Csv c("name,status,measured,tolerance,criterion,detail");
    for (std::size_t i = 0; i < rep.checks.size(); ++i) {
        const auto& k = rep.checks[i];
        std::string detail = k.detail;
        for (auto& ch : detail)
            if (ch == ',' || ch == '\n') ch = ';';
        c.row(k.name, k.exploratory ? "INFO" : (k.passed ? "PASS" : "FAIL"), k.measured, k.tolerance, rep.criterion[i],
              detail);
    }
    return c.str();
}

json manifest(const Report& rep, const hmflow::config::Config& cfg, const hmflow::experiments::Context& ctx,
              double seconds) {
    json checks = json::array();
    for (std::size_t i = 0; i < rep.checks.size(); ++i) {
        const auto& k = rep.checks[i];
        checks.push_back({{"name", k.name}, {"measured", k.measured}, {"tolerance", k.tolerance},
                          {"status", k.exploratory ? "INFO" : (k.passed ? "PASS" : "FAIL")},
                          {"criterion", rep.criterion[i]}, {"detail", k.detail}});
    }
    json snapshot = json::object();
    for (const auto& key : cfg.keys()) snapshot[key] = {{"value", cfg.raw(key)}, {"origin", cfg.origin(key)}};
    json files = json::array();
    for (const auto& [name, body] : rep.files) files.push_back(name);
    return {{"command", rep.command},
            {"config_schema", hmflow::config::schema_version},
            {"config_hash", cfg.hash()},
            {"config", snapshot},
            {"kernel_scheme", hmflow::cache::scheme_version},
            {"kernel_tables", rep.caches},
            {"seed", ctx.seed},
            {"threads", hmflow::parallel::thread_count().load()},
            {"strict", ctx.strict},
            {"wall_clock_seconds", seconds},
            {"passed", rep.passed(ctx.strict)},
            {"inconclusive", rep.inconclusive},
            {"checks", checks},
            {"files", files},
            {"data", rep.data}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hmflow: heat kernels with moving boundaries and the radial harmonic map flow"};
    app.require_subcommand(1);

    std::string config_path, out_dir, cache_dir;
    int threads = -1;
    long seed = -1;
    bool strict = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    app.add_option("--out-dir", out_dir, "output directory (default out/<command>)");
    app.add_option("--cache-dir", cache_dir, "kernel table cache directory");
    app.add_option("--threads", threads, "worker threads, 0 = all cores");
    app.add_option("--seed", seed, "seed for the perturbations");
    app.add_flag("--strict", strict, "treat inconclusive verdicts as failures");
    app.add_option("--set", overrides, "override one key: section.key=value")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

    using Suite = std::function<Report(const hmflow::config::Config&, const hmflow::experiments::Context&)>;
    const std::map<std::string, std::pair<std::string, Suite>> suites{
        {"green-verify", {"kernel identities, comparison chain, limits and envelopes", hmflow::experiments::green_verify}},
        {"oracle-compare", {"radial kernels against the 3-D finite-difference oracle", hmflow::experiments::oracle_compare}},
        {"hmflow-run", {"solve the radial harmonic map flow", hmflow::experiments::hmflow_run}},
        {"uniqueness-test", {"perturbed first guesses, restart and contraction", hmflow::experiments::uniqueness_test}},
        {"singularity-classify", {"removable vs singular data on the punctured ball", hmflow::experiments::singularity_classify}},
    };
    for (const auto& [name, s] : suites) app.add_subcommand(name, s.first)->fallthrough();
    auto* show = app.add_subcommand("show-config", "print the effective configuration and exit")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    hmflow::config::Config cfg;
    try {
        cfg = config_path.empty() ? hmflow::config::Config::defaults() : hmflow::config::Config::load(config_path);
        cfg.apply_env(hmflow::config::Config::process_env());
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw hmflow::config::ConfigError("--set " + o, "expected section.key=value");
            cfg.set(o.substr(0, eq), o.substr(eq + 1), "--set");
        }
        if (threads >= 0) cfg.set("run.threads", std::to_string(threads), "--threads");
        if (seed >= 0) cfg.set("run.seed", std::to_string(seed), "--seed");
        if (strict) cfg.set("run.strict", "true", "--strict");
        if (!cache_dir.empty()) cfg.set("run.cache_dir", cache_dir, "--cache-dir");
    } catch (const hmflow::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (show->parsed()) {
        std::cout << cfg.dump();
        return 0;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        hmflow::experiments::Context ctx;
        ctx.cache_dir = cfg.text("run.cache_dir");
        ctx.strict = cfg.flag("run.strict");
        ctx.seed = static_cast<unsigned>(cfg.integer("run.seed"));
        const long n = cfg.integer("run.threads");
        hmflow::parallel::set_threads(n > 0 ? static_cast<int>(n)
                                            : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));

        const auto start = std::chrono::steady_clock::now();
        const Report rep = suites.at(command).second(cfg, ctx);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const fs::path dir = out_dir.empty() ? fs::path("out") / command : fs::path(out_dir);
        fs::create_directories(dir);
        for (const auto& [name, body] : rep.files) write_text(dir / name, body);
        write_text(dir / "checks.csv", checks_csv(rep));
        write_text(dir / "manifest.json", manifest(rep, cfg, ctx, seconds).dump(2) + "\n");

        std::ostringstream summary;
        for (const auto& c : rep.checks) summary << c.line() << "\n";
        if (rep.inconclusive) summary << (ctx.strict ? "FAIL" : "INFO") << "  inconclusive verdict present\n";
        summary << (rep.passed(ctx.strict) ? "PASSED" : "FAILED") << "  " << command << "  config " << cfg.hash() << "\n";
        write_text(dir / "summary.txt", summary.str());
        std::cout << summary.str();
        return rep.passed(ctx.strict) ? 0 : 1;
    } catch (const hmflow::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return 3;
    }
}
