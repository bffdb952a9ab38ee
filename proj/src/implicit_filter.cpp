#include "ifilter/implicit_filter.hpp"

#include "ifilter/errors.hpp"
#include "ifilter/io.hpp"

#include <cmath>

namespace ifilter {

namespace {

// Stream ids under the training seed.
constexpr std::uint64_t kPhiInitStream = 1;
constexpr std::uint64_t kPsiInitStream = 2;
constexpr std::uint64_t kIterationStream = 3;

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out)
{
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

struct BatchMatrices {
    Matrix states;       // state_dim x N
    Matrix observations; // input_dim x N
};

BatchMatrices stack_batch(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch)
{
    if (batch.empty())
        throw std::invalid_argument("empty batch");
    BatchMatrices b{Matrix(model.state_dim(), static_cast<Eigen::Index>(batch.size())),
                    Matrix(model.input_dim(), static_cast<Eigen::Index>(batch.size()))};
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch[n].state.size() != model.state_dim() || batch[n].observation.size() != model.input_dim())
            throw std::invalid_argument("batch entry " + std::to_string(n) + " does not match model dimensions");
        b.states.col(static_cast<Eigen::Index>(n)) = batch[n].state;
        b.observations.col(static_cast<Eigen::Index>(n)) = batch[n].observation;
    }
    return b;
}

void check_loss_arguments(const ImplicitFilterModel& model, std::size_t n, const Matrix& noise, int k, double lambda)
{
    if (k < 1)
        throw ConfigError("k_noise", "must be >= 1");
    if (k < 2 && lambda != 0.0)
        throw ConfigError("k_noise", "must be >= 2 when lambda != 0");
    if (noise.rows() != model.noise_dim || noise.cols() != static_cast<Eigen::Index>(n) * k)
        throw std::invalid_argument("noise matrix must be noise_dim x (N*K)");
}

/// psi inputs [phi(y_n); z_{n,k}] for all n, k.
Matrix sampler_inputs(const Matrix& features, const Matrix& noise, int k)
{
    const auto m = features.rows();
    Matrix in(m + noise.rows(), noise.cols());
    for (Eigen::Index n = 0; n < features.cols(); ++n)
        in.block(0, n * k, m, k) = features.col(n).replicate(1, k);
    in.bottomRows(noise.rows()) = noise;
    return in;
}

LossReport loss_value(const Matrix& states, const Matrix& samples, int k, double lambda)
{
    const auto batch = states.cols();
    double pq = 0.0;
    double qq = 0.0;
    for (Eigen::Index n = 0; n < batch; ++n) {
        const auto block = samples.middleCols(n * k, k);
        pq += (block.colwise() - states.col(n)).colwise().squaredNorm().sum() / k;
        if (k >= 2) {
            double pairs = 0.0;
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b)
                    if (a != b)
                        pairs += (block.col(a) - block.col(b)).squaredNorm();
            qq += pairs / (static_cast<double>(k) * (k - 1));
        }
    }
    LossReport r;
    r.delta_pq = pq / static_cast<double>(batch);
    r.delta_qq = qq / static_cast<double>(batch);
    r.total = r.delta_pq - lambda * r.delta_qq;
    if (!std::isfinite(r.total))
        throw NumericalError("loss is not finite");
    return r;
}

} // namespace

void ArchitectureConfig::validate() const
{
    if (window < 1)
        throw ConfigError("window", "must be >= 1");
    if (feature_dim < 1)
        throw ConfigError("feature_dim", "must be >= 1");
    if (noise_dim < 1)
        throw ConfigError("noise_dim", "must be >= 1");
    for (int h : phi_hidden)
        if (h < 1)
            throw ConfigError("phi_hidden", "sizes must be >= 1");
    for (int h : psi_hidden)
        if (h < 1)
            throw ConfigError("psi_hidden", "sizes must be >= 1");
}

void ImplicitFilterModel::validate() const
{
    if (window < 1)
        throw ConfigError("window", "must be >= 1");
    if (noise_dim < 1)
        throw ConfigError("noise_dim", "must be >= 1");
    if (phi.layers.empty() || psi.layers.empty())
        throw ConfigError("model", "networks must have at least one layer");
    if (phi.output_dim() != psi.input_dim() - noise_dim)
        throw ConfigError("model", "phi output dim must equal psi input dim minus noise_dim");
    if (phi.input_dim() % window != 0)
        throw ConfigError("model", "phi input dim must be a multiple of the window");
}

ImplicitFilterModel make_implicit_model(int obs_dim, int state_dim, const ArchitectureConfig& arch, RngStream rng)
{
    arch.validate();
    ImplicitFilterModel model;
    model.phi = mlp_init(layer_sizes(obs_dim * arch.window, arch.phi_hidden, arch.feature_dim),
                         rng.substream(kPhiInitStream));
    model.psi = mlp_init(layer_sizes(arch.feature_dim + arch.noise_dim, arch.psi_hidden, state_dim),
                         rng.substream(kPsiInitStream));
    model.noise_dim = arch.noise_dim;
    model.window = arch.window;
    model.validate();
    return model;
}

std::string to_string(DatasetMode mode)
{
    return mode == DatasetMode::iid ? "iid" : "trajectory";
}

DatasetMode dataset_mode_from_string(const std::string& s)
{
    if (s == "iid")
        return DatasetMode::iid;
    if (s == "trajectory")
        return DatasetMode::trajectory;
    throw ConfigError("dataset_mode", "expected 'iid' or 'trajectory', got '" + s + "'");
}

void TrainConfig::validate() const
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("lambda", "must be finite and >= 0");
    if (k_noise < 1 || (k_noise < 2 && lambda != 0.0))
        throw ConfigError("k_noise", "must be >= 2 (or 1 with lambda = 0)");
    if (batch_size < 1)
        throw ConfigError("batch_size", "must be >= 1");
    if (iterations < 1)
        throw ConfigError("iterations", "must be >= 1");
    adam.validate();
}

Matrix draw_noise(int noise_dim, std::size_t batch, int k, RngStream& rng)
{
    Matrix z(noise_dim, static_cast<Eigen::Index>(batch) * k);
    // column-major fill: one z vector at a time
    for (Eigen::Index c = 0; c < z.cols(); ++c)
        for (Eigen::Index r = 0; r < z.rows(); ++r)
            z(r, c) = rng.normal();
    return z;
}

Matrix sample_posterior(const ImplicitFilterModel& model, const Vector& y_window, const Matrix& noise)
{
    if (y_window.size() != model.input_dim())
        throw std::invalid_argument("sample_posterior: observation window has length " +
                                    std::to_string(y_window.size()) + ", model expects " +
                                    std::to_string(model.input_dim()));
    if (noise.rows() != model.noise_dim)
        throw std::invalid_argument("sample_posterior: noise has wrong dimension");
    const Vector features = mlp_forward(model.phi, y_window);
    return mlp_forward(model.psi, sampler_inputs(features, noise, static_cast<int>(noise.cols())));
}

Matrix sample_posterior(const ImplicitFilterModel& model, const Vector& y_window, int k, RngStream rng)
{
    if (k < 1)
        throw std::invalid_argument("sample_posterior: k must be >= 1");
    return sample_posterior(model, y_window, draw_noise(model.noise_dim, 1, k, rng));
}

LossReport empirical_loss(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                          const Matrix& noise, int k, double lambda)
{
    check_loss_arguments(model, batch.size(), noise, k, lambda);
    const auto b = stack_batch(model, batch);
    const Matrix features = mlp_forward(model.phi, b.observations);
    const Matrix samples = mlp_forward(model.psi, sampler_inputs(features, noise, k));
    return loss_value(b.states, samples, k, lambda);
}

LossReport empirical_loss(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                          const TrainConfig& config, RngStream rng)
{
    return empirical_loss(model, batch, draw_noise(model.noise_dim, batch.size(), config.k_noise, rng),
                          config.k_noise, config.lambda);
}

LossGradient loss_gradient(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                           const Matrix& noise, int k, double lambda)
{
    check_loss_arguments(model, batch.size(), noise, k, lambda);
    const auto b = stack_batch(model, batch);
    const auto n_batch = b.states.cols();

    const auto phi_trace = mlp_forward_trace(model.phi, b.observations);
    const Matrix& features = phi_trace.output;
    const auto psi_trace = mlp_forward_trace(model.psi, sampler_inputs(features, noise, k));
    const Matrix& samples = psi_trace.output;
    LossReport report = loss_value(b.states, samples, k, lambda);

    // d total / d s_{n,k} = (1/N) [ (2/K)(s - x_n) - lambda (4/(K-1)) (s - mean_n) ]
    Matrix cotangent(samples.rows(), samples.cols());
    const double inv_n = 1.0 / static_cast<double>(n_batch);
    for (Eigen::Index n = 0; n < n_batch; ++n) {
        const auto block = samples.middleCols(n * k, k);
        auto out = cotangent.middleCols(n * k, k);
        out = (2.0 / k) * (block.colwise() - b.states.col(n));
        if (k >= 2 && lambda != 0.0) {
            const Vector mean = block.rowwise().mean();
            out -= (lambda * 4.0 / (k - 1)) * (block.colwise() - mean);
        }
        out *= inv_n;
    }

    auto psi_back = mlp_backward(model.psi, psi_trace, cotangent);
    const auto m = features.rows();
    Matrix feature_cotangent(m, n_batch);
    for (Eigen::Index n = 0; n < n_batch; ++n)
        feature_cotangent.col(n) = psi_back.input_cotangent.block(0, n * k, m, k).rowwise().sum();
    auto phi_back = mlp_backward(model.phi, phi_trace, feature_cotangent);

    return {std::move(phi_back.grad), std::move(psi_back.grad), report};
}

LossGradient loss_gradient(const ImplicitFilterModel& model, const std::vector<StateObservation>& batch,
                           const TrainConfig& config, RngStream rng)
{
    return loss_gradient(model, batch, draw_noise(model.noise_dim, batch.size(), config.k_noise, rng),
                         config.k_noise, config.lambda);
}

TrainResult train(const std::vector<StateObservation>& data, ImplicitFilterModel model, const TrainConfig& config)
{
    config.validate();
    model.validate();
    if (data.size() < static_cast<std::size_t>(config.batch_size))
        throw ConfigError("batch_size", "dataset has " + std::to_string(data.size()) +
                                            " pairs, fewer than the batch size");

    TrainResult result{std::move(model), {}, {}, {}};
    auto& m = result.model;
    result.phi_optimizer = AdamState::fresh(m.phi, config.adam);
    result.psi_optimizer = AdamState::fresh(m.psi, config.adam);
    result.history.reserve(static_cast<std::size_t>(config.iterations));

    const RngStream iteration_root(config.seed, kIterationStream);
    std::vector<StateObservation> batch(static_cast<std::size_t>(config.batch_size));
    for (int it = 0; it < config.iterations; ++it) {
        RngStream rng = iteration_root.substream(static_cast<std::uint64_t>(it));
        for (auto& entry : batch)
            entry = data[rng.index(data.size())];
        const Matrix noise = draw_noise(m.noise_dim, batch.size(), config.k_noise, rng);

        LossGradient g;
        try {
            g = loss_gradient(m, batch, noise, config.k_noise, config.lambda);
        } catch (const NumericalError& e) {
            throw NumericalError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
        const double lr = result.psi_optimizer.effective_learning_rate();
        try {
            adam_update(m.phi, g.phi, result.phi_optimizer);
            adam_update(m.psi, g.psi, result.psi_optimizer);
        } catch (const NumericalError& e) {
            throw NumericalError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
        result.history.push_back({it, g.report, lr});
    }
    return result;
}

TrainResult train(const std::vector<StateObservation>& data, int obs_dim, int state_dim,
                  const ArchitectureConfig& arch, const TrainConfig& config)
{
    return train(data, make_implicit_model(obs_dim, state_dim, arch, RngStream(config.seed)), config);
}

SampleSummary summarize_samples(Matrix samples)
{
    const auto k = samples.cols();
    SampleSummary s;
    s.mean = samples.rowwise().mean();
    if (k >= 2) {
        const Matrix centered = samples.colwise() - s.mean;
        s.stddev = (centered.rowwise().squaredNorm() / static_cast<double>(k - 1)).cwiseSqrt();
    } else {
        s.stddev = Vector::Zero(samples.rows());
    }
    s.samples = std::move(samples);
    return s;
}

SampleSummary posterior_summary(const ImplicitFilterModel& model, const Vector& y_window, int k, RngStream rng)
{
    if (k < 2)
        throw std::invalid_argument("posterior_summary: k must be >= 2");
    return summarize_samples(sample_posterior(model, y_window, k, rng));
}

std::vector<StateObservation> make_training_set(const SystemModel& system, DatasetMode mode, std::size_t size,
                                                const Gaussian& prior, int window, RngStream rng)
{
    if (mode == DatasetMode::iid)
        return iid_windows(system, prior, size, window, rng);
    return trajectory_windows(simulate(system, static_cast<int>(size), rng), window);
}

std::string loss_history_csv(const std::vector<TrainingRecord>& history)
{
    std::string out = "iter,delta_pq,delta_qq,total,effective_lr\n";
    for (const auto& r : history) {
        out += std::to_string(r.iteration) + ',' + format_real(r.loss.delta_pq) + ',' + format_real(r.loss.delta_qq) +
               ',' + format_real(r.loss.total) + ',' + format_real(r.effective_lr) + '\n';
    }
    return out;
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {{"lambda", c.lambda},
            {"k_noise", c.k_noise},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"adam", to_json(c.adam)},
            {"dataset_mode", to_string(c.dataset_mode)},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    TrainConfig c;
    c.lambda = j.at("lambda").get<double>();
    c.k_noise = j.at("k_noise").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.iterations = j.at("iterations").get<int>();
    c.adam = adam_config_from_json(j.at("adam"));
    c.dataset_mode = dataset_mode_from_string(j.at("dataset_mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

nlohmann::json to_json(const ArchitectureConfig& a)
{
    return {{"window", a.window},
            {"feature_dim", a.feature_dim},
            {"noise_dim", a.noise_dim},
            {"phi_hidden", a.phi_hidden},
            {"psi_hidden", a.psi_hidden}};
}

ArchitectureConfig architecture_from_json(const nlohmann::json& j)
{
    ArchitectureConfig a;
    a.window = j.at("window").get<int>();
    a.feature_dim = j.at("feature_dim").get<int>();
    a.noise_dim = j.at("noise_dim").get<int>();
    a.phi_hidden = j.at("phi_hidden").get<std::vector<int>>();
    a.psi_hidden = j.at("psi_hidden").get<std::vector<int>>();
    a.validate();
    return a;
}

nlohmann::json checkpoint_json(const TrainResult& result, const TrainConfig& config)
{
    return {{"format", "ifilter-implicit-v1"},
            {"window", result.model.window},
            {"noise_dim", result.model.noise_dim},
            {"phi", to_json(result.model.phi)},
            {"psi", to_json(result.model.psi)},
            {"train_config", to_json(config)},
            {"adam_phi", to_json(result.phi_optimizer)},
            {"adam_psi", to_json(result.psi_optimizer)}};
}

ImplicitFilterModel model_from_checkpoint(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != "ifilter-implicit-v1")
            throw ConfigError("format", "unsupported checkpoint format");
        ImplicitFilterModel m;
        m.window = j.at("window").get<int>();
        m.noise_dim = j.at("noise_dim").get<int>();
        m.phi = mlp_from_json(j.at("phi"));
        m.psi = mlp_from_json(j.at("psi"));
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint", e.what());
    }
}

} // namespace ifilter
