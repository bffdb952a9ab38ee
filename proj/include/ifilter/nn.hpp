#pragma once

#include "ifilter/dynamics.hpp"
#include "ifilter/rng.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace ifilter {

struct DenseLayer {
    Matrix weight; // out x in
    Vector bias;   // out
};

/// Dense network with tanh hidden layers and an identity output layer.
struct MlpParams {
    std::vector<DenseLayer> layers;

    std::vector<int> layer_sizes() const;
    int input_dim() const;
    int output_dim() const;
    std::size_t parameter_count() const;

    /// Same shape, all zeros.
    MlpParams zeros_like() const;

    /// Flat view in layer order (weight row-major, then bias). Mostly for tests.
    Vector flatten() const;
    void assign_flat(const Vector& flat);

    bool all_finite() const;
};

/// Derivatives of a scalar w.r.t. every entry of an MlpParams; same shape.
using Gradient = MlpParams;

/// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
MlpParams mlp_init(const std::vector<int>& layer_sizes, RngStream rng);

MlpParams mlp_zeros(const std::vector<int>& layer_sizes);

Vector mlp_forward(const MlpParams& params, const Vector& input);

/// Column-wise forward over a batch: input is in_dim x B.
Matrix mlp_forward(const MlpParams& params, const Matrix& input);

/// Inputs to every layer from one forward pass, kept for the backward pass.
struct ForwardTrace {
    std::vector<Matrix> layer_inputs;
    Matrix output;
};

ForwardTrace mlp_forward_trace(const MlpParams& params, const Matrix& input);

struct BackwardResult {
    Gradient grad;          // summed over batch columns
    Matrix input_cotangent; // in_dim x B
};

/// Reverse-mode derivatives of sum_b <output_b, cotangent_b>.
BackwardResult mlp_backward(const MlpParams& params, const Matrix& input, const Matrix& output_cotangent);

BackwardResult mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_cotangent);

BackwardResult mlp_backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& output_cotangent);

struct AdamConfig {
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double decay_rate = 0.95;
    int decay_every = 100;

    void validate() const;
};

struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    long step_count = 0;
    AdamConfig config;

    static AdamState fresh(const MlpParams& params, const AdamConfig& config);

    /// lr * decay_rate^floor(step_count / decay_every), for the next update.
    double effective_learning_rate() const;
};

/// In-place Adam update with bias correction. Throws NumericalError on
/// non-finite gradients, leaving params and state untouched.
void adam_update(MlpParams& params, const Gradient& grad, AdamState& state);

struct AdamResult {
    MlpParams params;
    AdamState state;
};

AdamResult adam_step(MlpParams params, const Gradient& grad, AdamState state);

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamConfig& config);
AdamConfig adam_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_state_from_json(const nlohmann::json& j);

} // namespace ifilter
