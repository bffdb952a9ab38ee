#include "ifilter/nn.hpp"

#include "ifilter/errors.hpp"

#include <cmath>

namespace ifilter {

namespace {

void check_sizes(const std::vector<int>& sizes)
{
    if (sizes.size() < 2)
        throw ConfigError("layer_sizes", "need at least an input and an output size");
    for (int s : sizes)
        if (s < 1)
            throw ConfigError("layer_sizes", "sizes must be positive");
}

void check_same_shape(const MlpParams& a, const MlpParams& b)
{
    if (a.layer_sizes() != b.layer_sizes())
        throw std::invalid_argument("parameter shapes differ");
}

Vector json_vector(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> std_vector(const Vector& v)
{
    return {v.data(), v.data() + v.size()};
}

} // namespace

std::vector<int> MlpParams::layer_sizes() const
{
    std::vector<int> sizes;
    if (layers.empty())
        return sizes;
    sizes.push_back(static_cast<int>(layers.front().weight.cols()));
    for (const auto& l : layers)
        sizes.push_back(static_cast<int>(l.weight.rows()));
    return sizes;
}

int MlpParams::input_dim() const
{
    return static_cast<int>(layers.front().weight.cols());
}

int MlpParams::output_dim() const
{
    return static_cast<int>(layers.back().weight.rows());
}

std::size_t MlpParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

MlpParams MlpParams::zeros_like() const
{
    MlpParams z;
    z.layers.reserve(layers.size());
    for (const auto& l : layers)
        z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    return z;
}

Vector MlpParams::flatten() const
{
    Vector flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
                flat[k++] = l.weight(r, c);
        flat.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return flat;
}

void MlpParams::assign_flat(const Vector& flat)
{
    if (static_cast<std::size_t>(flat.size()) != parameter_count())
        throw std::invalid_argument("flat parameter vector has wrong length");
    Eigen::Index k = 0;
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
                l.weight(r, c) = flat[k++];
        l.bias = flat.segment(k, l.bias.size());
        k += l.bias.size();
    }
}

bool MlpParams::all_finite() const
{
    for (const auto& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite())
            return false;
    return true;
}

MlpParams mlp_zeros(const std::vector<int>& layer_sizes)
{
    check_sizes(layer_sizes);
    MlpParams p;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
        p.layers.push_back({Matrix::Zero(layer_sizes[i + 1], layer_sizes[i]), Vector::Zero(layer_sizes[i + 1])});
    return p;
}

MlpParams mlp_init(const std::vector<int>& layer_sizes, RngStream rng)
{
    MlpParams p = mlp_zeros(layer_sizes);
    for (auto& l : p.layers) {
        const double a = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
                l.weight(r, c) = a * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

static void check_input(const MlpParams& params, const Matrix& input, const char* who)
{
    if (input.rows() != params.input_dim())
        throw std::invalid_argument(std::string(who) + ": input has " + std::to_string(input.rows()) +
                                    " rows, network expects " + std::to_string(params.input_dim()));
}

ForwardTrace mlp_forward_trace(const MlpParams& params, const Matrix& input)
{
    check_input(params, input, "mlp_forward");
    ForwardTrace trace;
    const std::size_t n = params.layers.size();
    trace.layer_inputs.reserve(n);
    trace.layer_inputs.push_back(input);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = params.layers[i];
        Matrix z(l.weight.rows(), input.cols());
        z.noalias() = l.weight * trace.layer_inputs.back();
        z.colwise() += l.bias;
        if (i + 1 == n)
            trace.output = std::move(z);
        else
            trace.layer_inputs.emplace_back(z.array().tanh());
    }
    return trace;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input)
{
    return mlp_forward_trace(params, input).output;
}

Vector mlp_forward(const MlpParams& params, const Vector& input)
{
    return mlp_forward(params, Matrix(input));
}

BackwardResult mlp_backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& output_cotangent)
{
    const std::size_t n = params.layers.size();
    if (trace.layer_inputs.size() != n)
        throw std::invalid_argument("mlp_backward: trace does not match the network");
    if (output_cotangent.rows() != params.output_dim() || output_cotangent.cols() != trace.output.cols())
        throw std::invalid_argument("mlp_backward: cotangent dimension mismatch");

    BackwardResult out{params.zeros_like(), Matrix()};
    Matrix delta = output_cotangent; // d/d(pre-activation) of the current layer
    for (std::size_t i = n; i-- > 0;) {
        const auto& l = params.layers[i];
        out.grad.layers[i].weight.noalias() = delta * trace.layer_inputs[i].transpose();
        out.grad.layers[i].bias = delta.rowwise().sum();
        Matrix upstream(l.weight.cols(), delta.cols());
        upstream.noalias() = l.weight.transpose() * delta;
        if (i == 0) {
            out.input_cotangent = std::move(upstream);
        } else {
            // tanh' = 1 - tanh^2
            delta = upstream.array() * (1.0 - trace.layer_inputs[i].array().square());
        }
    }
    return out;
}

BackwardResult mlp_backward(const MlpParams& params, const Matrix& input, const Matrix& output_cotangent)
{
    check_input(params, input, "mlp_backward");
    return mlp_backward(params, mlp_forward_trace(params, input), output_cotangent);
}

BackwardResult mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_cotangent)
{
    return mlp_backward(params, Matrix(input), Matrix(output_cotangent));
}

void AdamConfig::validate() const
{
    if (!(learning_rate > 0.0))
        throw ConfigError("learning_rate", "must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0))
        throw ConfigError("beta1", "must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("beta2", "must lie in (0, 1)");
    if (!(epsilon > 0.0))
        throw ConfigError("epsilon", "must be > 0");
    if (!(decay_rate > 0.0))
        throw ConfigError("decay_rate", "must be > 0");
    if (decay_every < 1)
        throw ConfigError("decay_every", "must be >= 1");
}

AdamState AdamState::fresh(const MlpParams& params, const AdamConfig& config)
{
    config.validate();
    return {params.zeros_like(), params.zeros_like(), 0, config};
}

double AdamState::effective_learning_rate() const
{
    return config.learning_rate * std::pow(config.decay_rate, static_cast<double>(step_count / config.decay_every));
}

void adam_update(MlpParams& params, const Gradient& grad, AdamState& state)
{
    check_same_shape(params, grad);
    check_same_shape(params, state.first_moment);
    if (!grad.all_finite())
        throw NumericalError("adam: non-finite gradient at step " + std::to_string(state.step_count));

    const auto& c = state.config;
    const double lr = state.effective_learning_rate();
    const double t = static_cast<double>(state.step_count + 1);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
        theta.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.epsilon);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        update(params.layers[i].weight, grad.layers[i].weight, state.first_moment.layers[i].weight,
               state.second_moment.layers[i].weight);
        update(params.layers[i].bias, grad.layers[i].bias, state.first_moment.layers[i].bias,
               state.second_moment.layers[i].bias);
    }
    ++state.step_count;
}

AdamResult adam_step(MlpParams params, const Gradient& grad, AdamState state)
{
    adam_update(params, grad, state);
    return {std::move(params), std::move(state)};
}

nlohmann::json to_json(const MlpParams& params)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : params.layers) {
        // row-major
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
                w.push_back(l.weight(r, c));
        layers.push_back({{"weight", w}, {"bias", std_vector(l.bias)}});
    }
    return {{"layer_sizes", params.layer_sizes()}, {"layers", layers}};
}

MlpParams mlp_from_json(const nlohmann::json& j)
{
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    MlpParams p = mlp_zeros(sizes);
    const auto& layers = j.at("layers");
    if (layers.size() != p.layers.size())
        throw ConfigError("layers", "count does not match layer_sizes");
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        const auto w = layers[i].at("weight").get<std::vector<double>>();
        const Vector b = json_vector(layers[i].at("bias"));
        if (static_cast<Eigen::Index>(w.size()) != l.weight.size() || b.size() != l.bias.size())
            throw ConfigError("layers[" + std::to_string(i) + "]", "array length does not match layer_sizes");
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
                l.weight(r, c) = w[static_cast<std::size_t>(r * l.weight.cols() + c)];
        l.bias = b;
    }
    return p;
}

nlohmann::json to_json(const AdamConfig& c)
{
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},           {"beta2", c.beta2},
            {"epsilon", c.epsilon},             {"decay_rate", c.decay_rate}, {"decay_every", c.decay_every}};
}

AdamConfig adam_config_from_json(const nlohmann::json& j)
{
    AdamConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.decay_rate = j.at("decay_rate").get<double>();
    c.decay_every = j.at("decay_every").get<int>();
    c.validate();
    return c;
}

nlohmann::json to_json(const AdamState& s)
{
    return {{"config", to_json(s.config)},
            {"step_count", s.step_count},
            {"first_moment", to_json(s.first_moment)},
            {"second_moment", to_json(s.second_moment)}};
}

AdamState adam_state_from_json(const nlohmann::json& j)
{
    AdamState s;
    s.config = adam_config_from_json(j.at("config"));
    s.step_count = j.at("step_count").get<long>();
    s.first_moment = mlp_from_json(j.at("first_moment"));
    s.second_moment = mlp_from_json(j.at("second_moment"));
    return s;
}

} // namespace ifilter
