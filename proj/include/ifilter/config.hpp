#pragma once

#include "ifilter/dynamics.hpp"
#include "ifilter/implicit_filter.hpp"
#include "ifilter/oracle.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ifilter {

struct DatasetConfig {
    DatasetMode mode = DatasetMode::iid;
    std::size_t size = 1000;     // iid pairs, or trajectory length
    double prior_mean = 0.0;     // prior of x_{t-1} in iid mode
    double prior_variance = 5.0;
};

struct GridConfig {
    double lo = -6.0;
    double hi = 11.0;
    int count = 69;
};

struct EvaluationConfig {
    GridConfig grid;
    QuadratureConfig quadrature;
    int samples_per_point = 1000;
    std::size_t mc_samples = 1000000;
    std::vector<int> ngf_degrees{3, 7};
};

/// Everything a CLI run needs. Missing keys take the defaults below; unknown keys
/// are rejected.
struct RunConfig {
    std::string system = "benchmark";
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int simulate_steps = 1000;
    DatasetConfig dataset;
    ArchitectureConfig architecture;
    TrainConfig training; // training.seed and training.dataset_mode mirror seed / dataset.mode

    void validate() const;

    SystemModel make_system() const;
    Gaussian dataset_prior() const;
    /// dataset prior pushed through one transition (the prior every method conditions against)
    Gaussian evaluation_prior() const;
    std::vector<double> evaluation_grid() const;

    EvaluationConfig evaluation;
};

/// Strict parse; throws ConfigError with the dotted path of the offending field.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);

} // namespace ifilter
