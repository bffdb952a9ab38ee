#include "ifilter/errors.hpp"
#include "ifilter/oracle.hpp"
#include "ifilter/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ifilter;

namespace {

const Gaussian kPrior = Gaussian::scalar(0.0, 5.1);

/// Linear-branch conditional N(gain * (y - shift), 5.1 * 0.3 / 5.4).
void expect_linear_branch(double y, double shift)
{
    const auto p = oracle_posterior(y, kPrior, QuadratureConfig{});
    EXPECT_NEAR(p.summary.mean, 5.1 / 5.4 * (y - shift), 1e-3) << y;
    EXPECT_NEAR(p.summary.std, std::sqrt(5.1 * 0.3 / 5.4), 1e-3) << y;
    EXPECT_FALSE(p.outside_support);
}

} // namespace

TEST(OraclePosterior, PredictedPrior)
{
    const auto p = predicted_benchmark_prior();
    EXPECT_EQ(p.mean[0], 0.0);
    EXPECT_DOUBLE_EQ(p.variance[0], 5.1);
}

TEST(OraclePosterior, LinearBranches)
{
    expect_linear_branch(-10.0, 0.0);
    expect_linear_branch(12.0, 5.0);
}

TEST(OraclePosterior, NodeDoublingConverges)
{
    QuadratureConfig coarse;
    coarse.nodes = 2001;
    QuadratureConfig fine;
    fine.nodes = 4001;
    for (double y : uniform_grid(-6.0, 11.0, 69)) {
        const auto a = oracle_posterior(y, kPrior, coarse).summary;
        const auto b = oracle_posterior(y, kPrior, fine).summary;
        EXPECT_LT(std::abs(a.mean - b.mean), 1e-6) << y;
        EXPECT_LT(std::abs(a.std - b.std), 1e-6) << y;
    }
}

TEST(OraclePosterior, MeanMonotoneAndStdBounded)
{
    double prev = -1e300;
    for (double y : uniform_grid(-8.0, 13.0, 211)) {
        const auto p = oracle_posterior(y, kPrior, QuadratureConfig{}).summary;
        EXPECT_GE(p.mean, prev - 1e-12) << y;
        EXPECT_LE(p.std, std::sqrt(5.1) + 1e-12) << y;
        EXPECT_GT(p.std, 0.0);
        prev = p.mean;
    }
}

TEST(OraclePosterior, GapRegionConcentratesAtJump)
{
    // for 0 < y < 5 no noise-free x explains y; both branches pile up at x = 0 from either side
    const auto mid = oracle_posterior(2.5, kPrior, QuadratureConfig{}).summary;
    EXPECT_NEAR(mid.mean, 0.0, 1e-9);
    EXPECT_LT(mid.std, 0.5 * std::sqrt(5.1 * 0.3 / 5.4));
    // the posterior is symmetric about y = 2.5
    for (double d : {0.5, 1.7, 4.0}) {
        const auto a = oracle_posterior(2.5 - d, kPrior, QuadratureConfig{}).summary;
        const auto b = oracle_posterior(2.5 + d, kPrior, QuadratureConfig{}).summary;
        EXPECT_NEAR(a.mean, -b.mean, 1e-9);
        EXPECT_NEAR(a.std, b.std, 1e-9);
    }
}

TEST(OraclePosterior, OutsideSupportFlag)
{
    QuadratureConfig narrow;
    narrow.x_min = -1.0;
    narrow.x_max = 1.0;
    const auto p = oracle_posterior(200.0, kPrior, narrow);
    EXPECT_TRUE(p.outside_support);
}

TEST(OraclePosterior, Errors)
{
    QuadratureConfig bad;
    bad.nodes = 50;
    EXPECT_THROW(oracle_posterior(0.0, kPrior, bad), ConfigError);
    EXPECT_THROW(oracle_posterior(std::nan(""), kPrior, QuadratureConfig{}), std::domain_error);
    EXPECT_THROW(oracle_posterior(0.0, Gaussian::scalar(0.0, 0.0), QuadratureConfig{}), ConfigError);
}

// =============================================================================
// mc_expectation
// =============================================================================

TEST(McExpectation, Constant)
{
    const auto r = mc_expectation([](const Vector&, const Vector&) { return 1.0; }, benchmark_system(),
                                  Gaussian::scalar(0.0, 5.0), 1000, RngStream(1));
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.std_error, 0.0);
    EXPECT_EQ(r.samples, 1000u);
}

TEST(McExpectation, StateAndObservationMeans)
{
    const auto sys = benchmark_system();
    const auto prior = Gaussian::scalar(0.0, 5.0);
    const auto x = mc_expectation([](const Vector& s, const Vector&) { return s[0]; }, sys, prior, 1000000,
                                  RngStream(2));
    EXPECT_NEAR(x.value, 0.0, 3.0 * x.std_error);
    EXPECT_NEAR(x.std_error, std::sqrt(5.1 / 1e6), 1e-4);
    const auto y = mc_expectation([](const Vector&, const Vector& o) { return o[0]; }, sys, prior, 1000000,
                                  RngStream(3));
    EXPECT_NEAR(y.value, 2.5, 3.0 * y.std_error);
}

TEST(McExpectation, ErrorShrinksAsRootN)
{
    const auto sys = benchmark_system();
    const auto prior = Gaussian::scalar(0.0, 5.0);
    const auto g = [](const Vector& s, const Vector& o) { return s[0] * o[0]; };
    const auto small = mc_expectation(g, sys, prior, 10000, RngStream(4));
    const auto large = mc_expectation(g, sys, prior, 1000000, RngStream(4));
    EXPECT_NEAR(small.std_error / large.std_error, 10.0, 1.0);
}

TEST(McExpectation, NonFiniteIntegrand)
{
    EXPECT_THROW(mc_expectation([](const Vector&, const Vector&) { return std::nan(""); }, benchmark_system(),
                                Gaussian::scalar(0.0, 5.0), 10, RngStream(0)),
                 NumericalError);
}

// =============================================================================
// sweep
// =============================================================================

TEST(Sweep, OracleAgainstItselfIsZero)
{
    RunConfig c;
    const auto r = oracle_sweep(c);
    EXPECT_EQ(r.rows.size(), 69u);
    EXPECT_EQ(r.rmse_mean_vs_oracle, 0.0);
    EXPECT_EQ(r.rmse_std_vs_oracle, 0.0);
    EXPECT_EQ(r.rows.front().y, -6.0);
    EXPECT_EQ(r.rows.back().y, 11.0);
}

TEST(Sweep, GridValidation)
{
    const auto eval = oracle_evaluator(kPrior, QuadratureConfig{});
    const std::vector<double> grid{0.0, 1.0};
    std::vector<PosteriorSummary> ref{eval(0.0, RngStream(0)), eval(1.0, RngStream(0))};
    EXPECT_NO_THROW(sweep(eval, grid, ref, RngStream(0)));
    EXPECT_THROW(sweep(eval, std::vector<double>{1.0, 0.0}, std::vector<PosteriorSummary>{ref[1], ref[0]},
                       RngStream(0)),
                 ConfigError);
    EXPECT_THROW(sweep(eval, grid, std::span(ref).first(1), RngStream(0)), std::invalid_argument);
    EXPECT_THROW(uniform_grid(1.0, 0.0, 5), ConfigError);
    EXPECT_EQ(uniform_grid(-6.0, 11.0, 69)[4], -5.0);
}

TEST(Sweep, GaussianBaselinesOrdering)
{
    RunConfig c;
    const auto grid = c.evaluation_grid();
    const auto oracle = oracle_sweep(c);
    const auto gf = sweep(polynomial_evaluator(polynomial_filter_from_config(c, 1), "gf"), grid, oracle.rows,
                          RngStream(0));
    const auto ngf3 = sweep(polynomial_evaluator(polynomial_filter_from_config(c, 3), "ngf-3"), grid, oracle.rows,
                            RngStream(0));
    const auto ngf7 = sweep(polynomial_evaluator(polynomial_filter_from_config(c, 7), "ngf-7"), grid, oracle.rows,
                            RngStream(0));
    EXPECT_LT(ngf3.rmse_mean_vs_oracle, gf.rmse_mean_vs_oracle);
    EXPECT_LT(ngf7.rmse_mean_vs_oracle, ngf3.rmse_mean_vs_oracle);
    // Gaussian posteriors have a constant std; the oracle std varies with y
    EXPECT_GT(gf.rmse_std_vs_oracle, 0.0);
    EXPECT_EQ(gf.rows.front().std, gf.rows.back().std);
}

TEST(Sweep, CsvAndSummary)
{
    SweepResult a;
    a.rows = {{1.0, 0.5, 0.25, "gf"}};
    a.rmse_mean_vs_oracle = 0.125;
    const std::vector<SweepResult> all{a};
    EXPECT_EQ(sweep_csv(all), "method,y,mean,std\ngf,1,0.5,0.25\n");
    const auto j = sweep_summary_json(all);
    EXPECT_EQ(j["gf"]["rmse_mean_vs_oracle"].get<double>(), 0.125);
    EXPECT_EQ(j["gf"]["grid_points"].get<int>(), 1);
}
