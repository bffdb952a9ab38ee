#pragma once

#include "ifilter/dynamics.hpp"
#include "ifilter/nn.hpp"
#include "ifilter/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ifilter {

struct ArchitectureConfig {
    int window = 1;       // T0: observations fed to the feature network
    int feature_dim = 10; // M
    int noise_dim = 10;
    std::vector<int> phi_hidden{128, 128};
    std::vector<int> psi_hidden{128, 128};

    void validate() const;
};

/// Feature network phi: R^{obs_dim * window} -> R^M, and sampler psi: [phi(y); z] -> state.
struct ImplicitFilterModel {
    MlpParams phi;
    MlpParams psi;
    int noise_dim = 1;
    int window = 1;

    int feature_dim() const { return phi.output_dim(); }
    int state_dim() const { return psi.output_dim(); }
    int input_dim() const { return phi.input_dim(); }

    /// Throws ConfigError when the phi output does not feed the psi input.
    void validate() const;
};

ImplicitFilterModel make_implicit_model(int obs_dim, int state_dim, const ArchitectureConfig& arch, RngStream rng);

enum class DatasetMode { trajectory, iid };

std::string to_string(DatasetMode mode);
DatasetMode dataset_mode_from_string(const std::string& s);

struct TrainConfig {
    double lambda = 1.0;
    int k_noise = 20;
    int batch_size = 20;
    int iterations = 3000;
    AdamConfig adam;
    DatasetMode dataset_mode = DatasetMode::iid;
    std::uint64_t seed = 0;

    /// k_noise >= 2 is required unless lambda == 0.
    void validate() const;
};

struct LossReport {
    double delta_pq = 0.0;
    double delta_qq = 0.0;
    double total = 0.0;
};

/// Standard normal noise for a batch: noise_dim x (N*K); column n*K + k feeds datum n.
Matrix draw_noise(int noise_dim, std::size_t batch, int k, RngStream& rng);

/// psi(phi(y), z) for every column z of `noise`; returns state_dim x noise.cols().
Matrix sample_posterior(const ImplicitFilterModel& model, const Vector& y_window, const Matrix& noise);

/// k draws with fresh standard-normal z.
Matrix sample_posterior(const ImplicitFilterModel& model, const Vector& y_window, int k, RngStream rng);

/// Empirical diversity loss with explicit noise (noise_dim x N*k).
LossReport empirical_loss(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                          const Matrix& noise, int k, double lambda);

LossReport empirical_loss(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                          const TrainConfig& config, RngStream rng);

struct LossGradient {
    Gradient phi;
    Gradient psi;
    LossReport report;
};

/// Exact reverse-mode gradient of report.total = delta_pq - lambda * delta_qq.
LossGradient loss_gradient(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                           const Matrix& noise, int k, double lambda);

LossGradient loss_gradient(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                           const TrainConfig& config, RngStream rng);

struct TrainingRecord {
    int iteration = 0;
    LossReport loss;
    double effective_lr = 0.0;
};

struct TrainResult {
    ImplicitFilterModel model;
    AdamState phi_optimizer;
    AdamState psi_optimizer;
    std::vector<TrainingRecord> history;
};

/// Adam on minibatches drawn uniformly with replacement; fresh z every iteration.
/// Throws NumericalError naming the iteration if the loss or a gradient becomes non-finite.
TrainResult train(const std::vector<StateObservation>& data, ImplicitFilterModel model, const TrainConfig& config);

/// Initializes the networks from config.seed and trains.
TrainResult train(const std::vector<StateObservation>& data, int obs_dim, int state_dim,
                  const ArchitectureConfig& arch, const TrainConfig& config);

/// Per-dimension empirical mean and (n-1) standard deviation of k samples.
struct SampleSummary {
    Vector mean;
    Vector stddev;
    Matrix samples; // state_dim x k
};

SampleSummary summarize_samples(Matrix samples);

SampleSummary posterior_summary(const ImplicitFilterModel& model, const Vector& y_window, int k, RngStream rng);

/// Training pairs per dataset mode: `trajectory` rolls the system out for `size`
/// steps from its initial state and slides a window over it; `iid` draws `size`
/// independent windows starting from `prior`.
std::vector<StateObservation> make_training_set(const SystemModel& system, DatasetMode mode, std::size_t size,
                                                const Gaussian& prior, int window, RngStream rng);

std::string loss_history_csv(const std::vector<TrainingRecord>& history);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ArchitectureConfig& arch);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

/// Checkpoint: phi and psi parameters, noise/window sizes, and the training config and
/// optimizer states when present.
nlohmann::json checkpoint_json(const TrainResult& result, const TrainConfig& config);
ImplicitFilterModel model_from_checkpoint(const nlohmann::json& j);

} // namespace ifilter
