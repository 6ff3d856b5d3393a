#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
};

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("hmflow_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Runs the tool with stdout and stderr captured together.
Result run(const std::string& args, const std::string& env = "") {
    const auto log = scratch("log") / "out.txt";
    const std::string cmd = env + " " + HMFLOW_CLI + std::string(" ") + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream is(log);
    std::ostringstream os;
    os << is.rdbuf();
    r.out = os.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST(Cli, UnknownKeyExitsTwo) {
    const auto r = run("hmflow-run --set green.foo=1");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("unknown key 'green.foo'"), std::string::npos) << r.out;

    const auto dir = scratch("bad_config");
    std::ofstream(dir / "bad.conf") << "schema_version = 1\n[flow]\nn = 3\nbogus = 1\n";
    const auto f = run("hmflow-run --config " + (dir / "bad.conf").string());
    EXPECT_EQ(f.status, 2);
    EXPECT_NE(f.out.find("bad.conf:4: unknown key 'flow.bogus'"), std::string::npos) << f.out;

    EXPECT_EQ(run("hmflow-run", "HMFLOW_FLOW_BOGUS=1").status, 2);
    EXPECT_EQ(run("no-such-command").status, 2);
}

TEST(Cli, EnvironmentAndFlagsLayerOverFile) {
    const auto dir = scratch("layers");
    std::ofstream(dir / "a.conf") << "schema_version = 1\n[green]\nm = 3\n[run]\nseed = 4\n";
    const auto r = run("show-config --config " + (dir / "a.conf").string() + " --seed 9", "HMFLOW_FLOW_N=4");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("\n[green]\nm = 3\n"), std::string::npos);
    EXPECT_NE(r.out.find("seed = 9\n"), std::string::npos);
    EXPECT_NE(r.out.find("\n[flow]\nn = 4\n"), std::string::npos);
}

TEST(Cli, RunWritesDeterministicOutputs) {
    const auto a = scratch("run_a"), b = scratch("run_b");
    const std::string opts = " --set flow.horizon=0.1 --set flow.intervals=200 --set flow.direct_check=false";
    const auto ra = run("hmflow-run --out-dir " + a.string() + opts);
    const auto rb = run("hmflow-run --threads 2 --out-dir " + b.string() + opts);
    ASSERT_EQ(ra.status, 0) << ra.out;
    ASSERT_EQ(rb.status, 0) << rb.out;
    for (const char* f : {"trajectory.csv", "norms.csv", "checks.csv", "summary.txt"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(m["command"], "hmflow-run");
    EXPECT_EQ(m["passed"], true);
    EXPECT_EQ(m["config_hash"], nlohmann::json::parse(slurp(b / "manifest.json"))["config_hash"]);
    EXPECT_EQ(m["config"]["flow.horizon"]["origin"], "--set");
    EXPECT_DOUBLE_EQ(m["data"]["T0"].get<double>(), 0.1);
    EXPECT_FALSE(m["data"]["windows"].empty());
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
    const auto header = slurp(a / "trajectory.csv").substr(0, 30);
    EXPECT_EQ(header.rfind("t,r,rho_tilde,rho,norm\n", 0), 0u);
}

TEST(Cli, FailedCheckExitsOne) {
    const auto dir = scratch("fail");
    const auto r = run("uniqueness-test --out-dir " + dir.string() +
                       " --set uniqueness.tolerance=1e-30 --set flow.horizon=0.3 --set uniqueness.restart_at=0.15");
    EXPECT_EQ(r.status, 1) << r.out;
    EXPECT_NE(slurp(dir / "checks.csv").find(",FAIL,"), std::string::npos);
    EXPECT_NE(slurp(dir / "summary.txt").find("FAILED  uniqueness-test"), std::string::npos);
}
