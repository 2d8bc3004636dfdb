#include <gtest/gtest.h>

#include "coalflow/errors.hpp"
#include "coalflow/verify.hpp"

using namespace coalflow;

TEST(Verify, ClosedFormCriterionPasses) {
    const auto r = verify_criterion(1, {});
    EXPECT_EQ(r.verdict, Verdict::Pass);
    EXPECT_EQ(verdict_line(r).rfind("[PASS] C1", 0), 0u);
}

TEST(Verify, ReducedScaleIsUnderpowered) {
    VerifyOptions o;
    o.scale = 0.01;
    const auto r = verify_criterion(3, o);
    EXPECT_EQ(r.verdict, Verdict::Underpowered);
    const auto j = to_json(r);
    EXPECT_EQ(j.at("id"), 3);
    EXPECT_EQ(j.at("verdict"), "underpowered");
    EXPECT_TRUE(j.contains("measured"));
}

TEST(Verify, ReportShape) {
    VerifyOptions o;
    o.scale = 0.01;
    const auto results = verify_all({1, 8}, o);
    ASSERT_EQ(results.size(), 2u);
    EXPECT_EQ(results[1].verdict, Verdict::Pass);  // exact invariants hold at any scale
    const auto rep = verify_report(results, o);
    EXPECT_TRUE(rep.at("pass").get<bool>());
    EXPECT_EQ(rep.at("criteria").size(), 2u);
    EXPECT_FALSE(rep.dump().find("seconds") != std::string::npos);
    EXPECT_THROW(verify_criterion(10, o), InputError);
}
