#include "ifilter/dynamics.hpp"

#include "ifilter/errors.hpp"
#include "ifilter/io.hpp"

#include <cmath>
#include <stdexcept>

namespace ifilter {

namespace {

Vector draw_noise(const Vector& variance, RngStream& rng)
{
    Vector n(variance.size());
    for (Eigen::Index i = 0; i < variance.size(); ++i)
        n[i] = std::sqrt(variance[i]) * rng.normal();
    return n;
}

void check_count(std::size_t count)
{
    if (count == 0)
        throw ConfigError("count", "must be at least 1");
}

} // namespace

Gaussian Gaussian::scalar(double mean, double variance)
{
    return {Vector::Constant(1, mean), Vector::Constant(1, variance)};
}

Vector Gaussian::sample(RngStream& rng) const
{
    return mean + draw_noise(variance, rng);
}

void SystemModel::validate() const
{
    if (state_dim < 1)
        throw ConfigError("state_dim", "must be >= 1");
    if (obs_dim < 1)
        throw ConfigError("obs_dim", "must be >= 1");
    if (!transition || !observation)
        throw ConfigError("system", "transition and observation must be set");
    auto positive = [](const Vector& v, Eigen::Index n, const char* field) {
        if (v.size() != n)
            throw ConfigError(field, "dimension mismatch");
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (!(v[i] > 0.0) || !std::isfinite(v[i]))
                throw ConfigError(field, "variances must be finite and > 0");
    };
    positive(process_noise_variance, state_dim, "process_noise_variance");
    positive(observation_noise_variance, obs_dim, "observation_noise_variance");
    positive(initial_state.variance, state_dim, "initial_state.variance");
    if (initial_state.mean.size() != state_dim)
        throw ConfigError("initial_state.mean", "dimension mismatch");
}

Vector SystemModel::step(const Vector& state, RngStream& rng) const
{
    return transition(state, draw_noise(process_noise_variance, rng));
}

Vector SystemModel::observe(const Vector& state, RngStream& rng) const
{
    return observation(state, draw_noise(observation_noise_variance, rng));
}

double heaviside(double x)
{
    if (!std::isfinite(x))
        throw std::domain_error("heaviside: non-finite argument");
    return x >= 0.0 ? 1.0 : 0.0;
}

SystemModel benchmark_system()
{
    SystemModel s;
    s.name = "benchmark";
    s.state_dim = 1;
    s.obs_dim = 1;
    s.transition = [](const Vector& x, const Vector& n) -> Vector { return x + n; };
    s.observation = [](const Vector& x, const Vector& m) -> Vector {
        Vector y(1);
        y[0] = x[0] + m[0] + 5.0 * heaviside(x[0]);
        return y;
    };
    s.process_noise_variance = Vector::Constant(1, 0.1);
    s.observation_noise_variance = Vector::Constant(1, 0.3);
    s.initial_state = Gaussian::scalar(0.0, 1.0);
    return s;
}

SystemModel linear_system(double process_variance, double observation_variance)
{
    SystemModel s;
    s.name = "linear";
    s.transition = [](const Vector& x, const Vector& n) -> Vector { return x + n; };
    s.observation = [](const Vector& x, const Vector& m) -> Vector { return x + m; };
    s.process_noise_variance = Vector::Constant(1, process_variance);
    s.observation_noise_variance = Vector::Constant(1, observation_variance);
    s.initial_state = Gaussian::scalar(0.0, 1.0);
    s.validate();
    return s;
}

Trajectory simulate(const SystemModel& system, int steps, RngStream rng)
{
    system.validate();
    if (steps < 1)
        throw ConfigError("steps", "must be at least 1");
    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(steps));
    traj.observations.reserve(static_cast<std::size_t>(steps));
    Vector x = system.initial_state.sample(rng);
    for (int t = 0; t < steps; ++t) {
        if (t > 0)
            x = system.step(x, rng);
        traj.observations.push_back(system.observe(x, rng));
        traj.states.push_back(x);
    }
    return traj;
}

std::vector<StateObservation> sample_iid_pairs(const SystemModel& system, const Gaussian& prior,
                                               std::size_t count, RngStream rng)
{
    return iid_windows(system, prior, count, 1, rng);
}

std::vector<StateObservation> trajectory_windows(const Trajectory& trajectory, int window)
{
    if (window < 1)
        throw ConfigError("window", "must be at least 1");
    const auto w = static_cast<std::size_t>(window);
    if (trajectory.size() < w)
        throw ConfigError("window", "longer than trajectory");
    std::vector<StateObservation> out;
    out.reserve(trajectory.size() - w + 1);
    const auto obs_dim = trajectory.observations.front().size();
    for (std::size_t t = w - 1; t < trajectory.size(); ++t) {
        Vector y(obs_dim * window);
        for (std::size_t j = 0; j < w; ++j)
            y.segment(static_cast<Eigen::Index>(j) * obs_dim, obs_dim) = trajectory.observations[t + 1 - w + j];
        out.push_back({trajectory.states[t], std::move(y)});
    }
    return out;
}

std::vector<StateObservation> iid_windows(const SystemModel& system, const Gaussian& prior,
                                          std::size_t count, int window, RngStream rng)
{
    system.validate();
    check_count(count);
    if (window < 1)
        throw ConfigError("window", "must be at least 1");
    std::vector<StateObservation> out;
    out.reserve(count);
    const int m = system.obs_dim;
    for (std::size_t i = 0; i < count; ++i) {
        Vector x = prior.sample(rng);
        Vector y(m * window);
        for (int j = 0; j < window; ++j) {
            x = system.step(x, rng);
            y.segment(j * m, m) = system.observe(x, rng);
        }
        out.push_back({std::move(x), std::move(y)});
    }
    return out;
}

std::string trajectory_csv(const Trajectory& trajectory)
{
    std::string out = "t";
    if (trajectory.size() == 0)
        return out + "\n";
    const auto n = trajectory.states.front().size();
    const auto m = trajectory.observations.front().size();
    for (Eigen::Index i = 0; i < n; ++i)
        out += ",x_" + std::to_string(i);
    for (Eigen::Index i = 0; i < m; ++i)
        out += ",y_" + std::to_string(i);
    out += '\n';
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
        out += std::to_string(t);
        for (Eigen::Index i = 0; i < n; ++i)
            out += ',' + format_real(trajectory.states[t][i]);
        for (Eigen::Index i = 0; i < m; ++i)
            out += ',' + format_real(trajectory.observations[t][i]);
        out += '\n';
    }
    return out;
}

} // namespace ifilter
