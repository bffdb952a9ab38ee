#include "ifilter/oracle.hpp"

#include "ifilter/errors.hpp"
#include "ifilter/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ifilter {

namespace {

constexpr double kObservationVariance = 0.3;
constexpr double kJump = 5.0;

/// Composite Boole panel weights (7, 32, 12, 32, 7) * 2h/45 on [a, b] with n intervals (n % 4 == 0).
struct Panel {
    double a;
    double b;
    int intervals;
    double step;
};

std::vector<Panel> quadrature_panels(const QuadratureConfig& c)
{
    const int total = c.nodes - 1;
    auto round4 = [](int n) { return std::max(4, n - n % 4); };
    if (c.x_min >= 0.0 || c.x_max <= 0.0) {
        const int n = round4(total);
        return {{c.x_min, c.x_max, n, (c.x_max - c.x_min) / n}};
    }
    const int left = round4(static_cast<int>(std::lround(total * (-c.x_min) / (c.x_max - c.x_min))));
    const int right = round4(total - left);
    return {{c.x_min, 0.0, left, -c.x_min / left}, {0.0, c.x_max, right, c.x_max / right}};
}

double boole_weight(int i, int n)
{
    if (i == 0 || i == n)
        return 7.0;
    switch (i % 4) {
    case 0:
        return 14.0; // shared panel boundary
    case 2:
        return 12.0;
    default:
        return 32.0;
    }
}

double rmse(std::span<const double> d)
{
    double s = 0.0;
    for (double v : d)
        s += v * v;
    return std::sqrt(s / static_cast<double>(d.size()));
}

} // namespace

void QuadratureConfig::validate() const
{
    if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max))
        throw ConfigError("quadrature", "need finite x_min < x_max");
    if (nodes < 100)
        throw ConfigError("quadrature.nodes", "must be >= 100");
}

Gaussian predicted_benchmark_prior()
{
    return Gaussian::scalar(0.0, 5.0 + 0.1);
}

OraclePosterior oracle_posterior(double y, const Gaussian& prior, const QuadratureConfig& config)
{
    config.validate();
    if (prior.mean.size() != 1 || prior.variance.size() != 1 || !(prior.variance[0] > 0.0))
        throw ConfigError("prior", "oracle needs a scalar Gaussian prior with positive variance");
    if (!std::isfinite(y))
        throw std::domain_error("oracle_posterior: non-finite observation");

    const double mu = prior.mean[0];
    const double var = prior.variance[0];
    // the right piece starts at x = 0 where H = 1, the left piece is the x -> 0- limit
    auto log_density = [&](double x, bool right) {
        const double r = y - x - (right ? kJump : 0.0);
        return -r * r / (2.0 * kObservationVariance) - (x - mu) * (x - mu) / (2.0 * var);
    };

    const auto panels = quadrature_panels(config);
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto& p : panels)
        for (int i = 0; i <= p.intervals; ++i) {
            const double x = p.a + i * p.step;
            peak = std::max(peak, log_density(x, p.a >= 0.0));
        }

    double mass = 0.0;
    double first = 0.0;
    for (const auto& p : panels) {
        const bool right = p.a >= 0.0;
        const double scale = 2.0 * p.step / 45.0;
        for (int i = 0; i <= p.intervals; ++i) {
            const double x = (i == p.intervals) ? p.b : p.a + i * p.step;
            const double w = scale * boole_weight(i, p.intervals) * std::exp(log_density(x, right) - peak);
            mass += w;
            first += w * x;
        }
    }

    OraclePosterior out;
    out.log_normalizer = std::log(mass) + peak - 0.5 * std::log(2.0 * std::numbers::pi * kObservationVariance) -
                         0.5 * std::log(2.0 * std::numbers::pi * var);
    out.outside_support = !(out.log_normalizer > std::log(1e-300));
    const double mean = first / mass;
    // central second moment, computed around the mean to avoid cancellation
    double central = 0.0;
    for (const auto& p : panels) {
        const bool right = p.a >= 0.0;
        const double scale = 2.0 * p.step / 45.0;
        for (int i = 0; i <= p.intervals; ++i) {
            const double x = (i == p.intervals) ? p.b : p.a + i * p.step;
            const double w = scale * boole_weight(i, p.intervals) * std::exp(log_density(x, right) - peak);
            central += w * (x - mean) * (x - mean);
        }
    }
    out.summary = {y, mean, std::sqrt(std::max(0.0, central / mass)), "oracle"};
    return out;
}

McEstimate mc_expectation(const Integrand& g, const SystemModel& system, const Gaussian& prior, std::size_t n,
                          RngStream rng)
{
    system.validate();
    if (n < 1)
        throw ConfigError("n", "must be >= 1");
    // Welford
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vector x = prior.sample(rng);
        const Vector y = system.observe(x, rng);
        const double v = g(x, y);
        if (!std::isfinite(v))
            throw NumericalError("mc_expectation: integrand returned a non-finite value at sample " +
                                 std::to_string(i));
        const double delta = v - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v - mean);
    }
    McEstimate e;
    e.value = mean;
    e.samples = n;
    e.std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
}

PosteriorEvaluator oracle_evaluator(const Gaussian& prior, const QuadratureConfig& config)
{
    return [prior, config](double y, RngStream) { return oracle_posterior(y, prior, config).summary; };
}

PosteriorEvaluator polynomial_evaluator(const PolynomialGaussianFilter& filter, std::string method)
{
    return [filter, method = std::move(method)](double y, RngStream) {
        const Vector obs = Vector::Constant(1, y);
        return PosteriorSummary{y, filter.mean(obs)[0], filter.posterior.stddev()[0], method};
    };
}

PosteriorEvaluator implicit_evaluator(const ImplicitFilterModel& model, int k)
{
    return [model, k](double y, RngStream rng) {
        const Vector window = Vector::Constant(model.input_dim(), y);
        const auto s = posterior_summary(model, window, k, rng);
        return PosteriorSummary{y, s.mean[0], s.stddev[0], "implicit"};
    };
}

std::vector<double> uniform_grid(double lo, double hi, int count)
{
    if (count < 1)
        throw ConfigError("grid.count", "must be >= 1");
    if (count > 1 && !(lo < hi))
        throw ConfigError("grid", "need lo < hi");
    std::vector<double> g(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        g[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    g.back() = count == 1 ? lo : hi;
    return g;
}

SweepResult sweep(const PosteriorEvaluator& method, std::span<const double> grid,
                  std::span<const PosteriorSummary> reference, RngStream rng)
{
    if (grid.empty())
        throw ConfigError("grid", "must be nonempty");
    if (reference.size() != grid.size())
        throw std::invalid_argument("sweep: reference does not cover the grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw ConfigError("grid", "must be strictly increasing");
        if (reference[i].y != grid[i])
            throw std::invalid_argument("sweep: reference grid differs");
    }

    SweepResult r;
    r.rows.reserve(grid.size());
    std::vector<double> dmean;
    std::vector<double> dstd;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto row = method(grid[i], rng.substream(i));
        if (!std::isfinite(row.mean) || !std::isfinite(row.std))
            throw NumericalError("sweep: method '" + row.method + "' produced a non-finite estimate at y = " +
                                 format_real(grid[i]));
        dmean.push_back(row.mean - reference[i].mean);
        dstd.push_back(row.std - reference[i].std);
        r.rows.push_back(std::move(row));
    }
    r.rmse_mean_vs_oracle = rmse(dmean);
    r.rmse_std_vs_oracle = rmse(dstd);
    return r;
}

std::string sweep_csv(std::span<const SweepResult> sweeps)
{
    std::string out = "method,y,mean,std\n";
    for (const auto& s : sweeps)
        for (const auto& row : s.rows)
            out += row.method + ',' + format_real(row.y) + ',' + format_real(row.mean) + ',' + format_real(row.std) +
                   '\n';
    return out;
}

nlohmann::json sweep_summary_json(std::span<const SweepResult> sweeps)
{
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& s : sweeps) {
        if (s.rows.empty())
            continue;
        methods[s.rows.front().method] = {{"rmse_mean_vs_oracle", s.rmse_mean_vs_oracle},
                                          {"rmse_std_vs_oracle", s.rmse_std_vs_oracle},
                                          {"grid_points", s.rows.size()}};
    }
    return methods;
}

} // namespace ifilter
