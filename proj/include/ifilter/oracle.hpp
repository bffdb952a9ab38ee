#pragma once

#include "ifilter/dynamics.hpp"
#include "ifilter/gaussian_filter.hpp"
#include "ifilter/implicit_filter.hpp"
#include "ifilter/rng.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ifilter {

struct QuadratureConfig {
    double x_min = -15.0;
    double x_max = 15.0;
    int nodes = 4001;

    void validate() const;
};

struct PosteriorSummary {
    double y = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::string method;
};

struct OraclePosterior {
    PosteriorSummary summary;
    double log_normalizer = 0.0; // log of the unnormalized posterior mass
    bool outside_support = false; // normalizer below 1e-300
};

/// The one-step predicted prior of the benchmark: N(0, 5) pushed through Var(n) = 0.1.
Gaussian predicted_benchmark_prior();

/// Exact 1-D posterior of the benchmark observation model
/// p(x | y) ∝ N(y | x + 5 H(x), 0.3) N(x | prior), by composite Boole quadrature
/// split at the jump x = 0.
OraclePosterior oracle_posterior(double y, const Gaussian& prior, const QuadratureConfig& config);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

using Integrand = std::function<double(const Vector& state, const Vector& observation)>;

/// (1/n) sum g(x_i, h(x_i, m_i)) with x_i ~ prior and fresh observation noise.
/// Throws NumericalError if g returns a non-finite value.
McEstimate mc_expectation(const Integrand& g, const SystemModel& system, const Gaussian& prior, std::size_t n,
                          RngStream rng);

struct SweepResult {
    std::vector<PosteriorSummary> rows;
    double rmse_mean_vs_oracle = 0.0;
    double rmse_std_vs_oracle = 0.0;
};

/// Posterior mean/std at a scalar observation. The stream is per grid point.
using PosteriorEvaluator = std::function<PosteriorSummary(double y, RngStream rng)>;

PosteriorEvaluator oracle_evaluator(const Gaussian& prior, const QuadratureConfig& config);
PosteriorEvaluator polynomial_evaluator(const PolynomialGaussianFilter& filter, std::string method);
/// Empirical moments over k samples; the window is the scalar y repeated.
PosteriorEvaluator implicit_evaluator(const ImplicitFilterModel& model, int k);

/// `count` evenly spaced points from lo to hi inclusive.
std::vector<double> uniform_grid(double lo, double hi, int count);

/// Evaluates the method at each grid point (stream = rng.substream(index)) and scores
/// mean and std RMSE against `reference`, which must cover the same grid.
SweepResult sweep(const PosteriorEvaluator& method, std::span<const double> grid,
                  std::span<const PosteriorSummary> reference, RngStream rng);

/// `method,y,mean,std` rows for all sweeps in order.
std::string sweep_csv(std::span<const SweepResult> sweeps);

nlohmann::json sweep_summary_json(std::span<const SweepResult> sweeps);

} // namespace ifilter
