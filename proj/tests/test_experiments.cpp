#include <gtest/gtest.h>

#include "hmflow/experiments.hpp"

using namespace hmflow;
namespace ex = hmflow::experiments;

TEST(Csv, FullPrecisionRows) {
    ex::Csv c("a,b,c");
    c.row(0.1, 3, "x");
    EXPECT_EQ(c.str(), "a,b,c\n0.10000000000000001,3,x\n");
}

TEST(Report, StrictFailsInconclusive) {
    ex::Report r;
    r.add(Check::at_most("a", 1.0, 2.0), 3);
    r.add(Check::info("b", 5.0));
    EXPECT_TRUE(r.passed(true));
    r.inconclusive = true;
    EXPECT_TRUE(r.passed(false));
    EXPECT_FALSE(r.passed(true));
    r.add(Check::at_least("c", 1.0, 2.0), 3);
    EXPECT_FALSE(r.passed(false));
    EXPECT_EQ(r.for_criterion(3).size(), 2u);
    EXPECT_EQ(r.for_criterion(0).size(), 1u);
}

TEST(FlowFamily, FromConfig) {
    auto c = config::Config::defaults();
    EXPECT_EQ(ex::flow_family(c).n, 3);
    c.set("flow.metric", "cylinder_tail");
    EXPECT_NO_THROW(ex::flow_family(c));
    c.set("flow.params", "0.1, 0.2");
    EXPECT_THROW(ex::flow_family(c), config::ConfigError);
    c.set("flow.metric", "round");
    EXPECT_THROW(ex::flow_family(c), config::ConfigError);
}

TEST(UniformTail, DropsRefinedHead) {
    flow::FlowConfig fc;
    const auto s = flow::solve(metric::smooth_bump(3, 0.0, 0.9, 0.05, 0.02, 0.02, 0.01), 0.3, fc);
    const auto tail = ex::uniform_tail(s);
    const auto& t = tail.times();
    ASSERT_GE(t.size(), 3u);
    EXPECT_DOUBLE_EQ(t.back(), s.times().back());
    for (std::size_t k = 1; k < t.size(); ++k) EXPECT_NEAR(t[k] - t[k - 1], t[1] - t[0], 1e-9 * (t[1] - t[0]));
    EXPECT_NO_THROW(flow::residual(tail));
    EXPECT_LE(ex::window_bound_ratio(s.trajectory), 1.0);
}

TEST(KernelChecks, CriteriaOneAndTwo) {
    ex::Report r;
    ex::kernel_checks(r);
    ASSERT_EQ(r.checks.size(), 2u);
    EXPECT_TRUE(r.checks[0].passed) << r.checks[0].line();
    EXPECT_TRUE(r.checks[1].passed) << r.checks[1].line();
    EXPECT_EQ(r.criterion, (std::vector<int>{1, 2}));
}
