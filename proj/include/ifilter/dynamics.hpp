#pragma once

#include "ifilter/rng.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace ifilter {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Gaussian with diagonal covariance.
struct Gaussian {
    Vector mean;
    Vector variance;

    static Gaussian scalar(double mean, double variance);
    Vector sample(RngStream& rng) const;
};

/// Discrete time-invariant system x_t = f(x_{t-1}, n_t), y_t = h(x_t, m_t).
///
/// All randomness enters through the noise arguments, so f and h are
/// deterministic functions.
struct SystemModel {
    using Transition = std::function<Vector(const Vector& state, const Vector& process_noise)>;
    using Observation = std::function<Vector(const Vector& state, const Vector& observation_noise)>;

    std::string name;
    int state_dim = 1;
    int obs_dim = 1;
    Transition transition;
    Observation observation;
    Vector process_noise_variance;
    Vector observation_noise_variance;
    Gaussian initial_state;

    /// Throws ConfigError on non-positive dimensions or variances.
    void validate() const;

    Vector step(const Vector& state, RngStream& rng) const;
    Vector observe(const Vector& state, RngStream& rng) const;
};

struct Trajectory {
    std::vector<Vector> states;
    std::vector<Vector> observations;

    std::size_t size() const noexcept { return states.size(); }
};

/// A state paired with the observation(s) that condition it. For a window of
/// T0 observations, `observation` stacks y_{t-T0+1}, ..., y_t.
struct StateObservation {
    Vector state;
    Vector observation;
};

/// H(x) = 1 for x >= 0, else 0. Throws std::domain_error on non-finite input.
double heaviside(double x);

/// x_t = x_{t-1} + n_t, y_t = x_t + m_t + 5 H(x_t), Var(n)=0.1, Var(m)=0.3, x_0 ~ N(0,1).
SystemModel benchmark_system();

/// x_t = x_{t-1} + n_t, y_t = x_t + m_t. Used as the analytically tractable reference.
SystemModel linear_system(double process_variance, double observation_variance);

Trajectory simulate(const SystemModel& system, int steps, RngStream rng);

/// x_{t-1} ~ prior, then one transition and one observation per pair.
std::vector<StateObservation> sample_iid_pairs(const SystemModel& system, const Gaussian& prior,
                                               std::size_t count, RngStream rng);

/// Sliding windows of `window` consecutive observations ending at each t >= window-1,
/// paired with x_t.
std::vector<StateObservation> trajectory_windows(const Trajectory& trajectory, int window);

/// Independent windows: x_{t-window} ~ prior, then `window` transitions, keeping the
/// observations of every step. window = 1 reproduces sample_iid_pairs.
std::vector<StateObservation> iid_windows(const SystemModel& system, const Gaussian& prior,
                                          std::size_t count, int window, RngStream rng);

/// CSV with header `t,x_0..,y_0..` and 17 significant digits.
std::string trajectory_csv(const Trajectory& trajectory);

} // namespace ifilter
