#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdfc/verify.hpp"

using namespace sdfc;

namespace {

std::string report_path(const std::string& tag) {
    return (std::filesystem::temp_directory_path() / ("sdfc_verify_" + tag + ".json")).string();
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Verify, FullSuitePasses) {
    VerifyOptions opts;
    opts.report_path = report_path("pass");
    const VerifyReport rep = run_verify(opts);
    EXPECT_TRUE(rep.all_passed);
    EXPECT_GE(rep.checks.size(), 12u);
    for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.check;
    EXPECT_TRUE(std::filesystem::exists(opts.report_path));
    const std::string body = slurp_file(opts.report_path);
    EXPECT_NE(body.find("\"status\": \"pass\""), std::string::npos);
    EXPECT_EQ(body.find("\"status\": \"fail\""), std::string::npos);
}

TEST(Verify, CorruptGradientHookIsCaughtByName) {
    VerifyOptions opts;
    opts.corrupt_gradient = true;
    opts.report_path = report_path("corrupt");
    const VerifyReport rep = run_verify(opts);
    EXPECT_FALSE(rep.all_passed);
    bool named = false;
    for (const auto& c : rep.checks)
        if (!c.passed) {
            EXPECT_EQ(c.check, "gradient_analytic_vs_oracle");
            named = true;
        }
    EXPECT_TRUE(named);
}

TEST(Verify, ReportsAreIdempotent) {
    VerifyOptions a;
    a.report_path = report_path("idem_a");
    VerifyOptions b;
    b.report_path = report_path("idem_b");
    run_verify(a);
    run_verify(b);
    const std::string ra = slurp_file(a.report_path);
    EXPECT_FALSE(ra.empty());
    EXPECT_EQ(ra, slurp_file(b.report_path));
}
