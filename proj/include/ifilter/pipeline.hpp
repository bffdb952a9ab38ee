#pragma once

#include "ifilter/config.hpp"
#include "ifilter/gaussian_filter.hpp"
#include "ifilter/implicit_filter.hpp"
#include "ifilter/oracle.hpp"

#include <vector>

namespace ifilter {

// Random stream ids under RunConfig::seed. Training draws from its own ids inside train().
inline constexpr std::uint64_t kSimulateStream = 101;
inline constexpr std::uint64_t kDatasetStream = 102;
inline constexpr std::uint64_t kMomentStream = 103;
inline constexpr std::uint64_t kSweepStream = 104;
inline constexpr std::uint64_t kExpectStream = 105;

Trajectory simulate_from_config(const RunConfig& config);

std::vector<StateObservation> training_set_from_config(const RunConfig& config);

TrainResult train_from_config(const RunConfig& config);

/// GF is degree 1; NGF degrees come from the evaluation config.
PolynomialGaussianFilter polynomial_filter_from_config(const RunConfig& config, int degree);

/// Oracle sweep on the evaluation grid (its RMSEs are zero by construction).
SweepResult oracle_sweep(const RunConfig& config);

/// Sweeps in the order oracle, gf, ngf-<d>..., implicit.
std::vector<SweepResult> compare_methods(const RunConfig& config, const ImplicitFilterModel& model);

} // namespace ifilter
