#include "ifilter/config.hpp"

#include "ifilter/errors.hpp"
#include "ifilter/io.hpp"

#include <set>

namespace ifilter {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key)
{
    return path.empty() ? key : path + "." + key;
}

/// Rejects keys outside `allowed`; returns the object for chaining.
const json& object_at(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!j.is_object())
        throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!keys.contains(key))
            throw ConfigError(join(path, key), "unknown key");
    return j;
}

template <typename T>
void read(const json& obj, const std::string& path, const char* key, T& out)
{
    if (!obj.contains(key))
        return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(join(path, key), std::string("wrong type: ") + e.what());
    }
}

/// Rethrows a validation error with its field prefixed by `path`.
template <typename F>
void validate_at(const std::string& path, F&& f)
{
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.field()), e.what());
    }
}

} // namespace

void RunConfig::validate() const
{
    if (system != "benchmark")
        throw ConfigError("system", "only 'benchmark' is built in");
    if (output_dir.empty())
        throw ConfigError("output_dir", "must be nonempty");
    if (simulate_steps < 1)
        throw ConfigError("simulate.steps", "must be >= 1");
    if (dataset.size < 1)
        throw ConfigError("dataset.size", "must be >= 1");
    if (!(dataset.prior_variance > 0.0))
        throw ConfigError("dataset.prior_variance", "must be > 0");
    validate_at("architecture", [&] { architecture.validate(); });
    validate_at("training", [&] { training.validate(); });
    if (dataset.size < static_cast<std::size_t>(training.batch_size))
        throw ConfigError("dataset.size", "smaller than training.batch_size");
    validate_at("evaluation.quadrature", [&] { evaluation.quadrature.validate(); });
    if (evaluation.grid.count < 1 || (evaluation.grid.count > 1 && !(evaluation.grid.lo < evaluation.grid.hi)))
        throw ConfigError("evaluation.grid", "need count >= 1 and lo < hi");
    if (evaluation.samples_per_point < 2)
        throw ConfigError("evaluation.samples_per_point", "must be >= 2");
    if (evaluation.mc_samples < 100)
        throw ConfigError("evaluation.mc_samples", "must be >= 100");
    for (int d : evaluation.ngf_degrees)
        if (d < 1)
            throw ConfigError("evaluation.ngf_degrees", "degrees must be >= 1");
}

SystemModel RunConfig::make_system() const
{
    return benchmark_system();
}

Gaussian RunConfig::dataset_prior() const
{
    return Gaussian::scalar(dataset.prior_mean, dataset.prior_variance);
}

Gaussian RunConfig::evaluation_prior() const
{
    const auto sys = make_system();
    return {dataset_prior().mean, dataset_prior().variance + sys.process_noise_variance};
}

std::vector<double> RunConfig::evaluation_grid() const
{
    return uniform_grid(evaluation.grid.lo, evaluation.grid.hi, evaluation.grid.count);
}

RunConfig run_config_from_json(const json& j)
{
    RunConfig c;
    object_at(j, "", {"system", "seed", "output_dir", "simulate", "dataset", "architecture", "training", "evaluation"});
    read(j, "", "system", c.system);
    read(j, "", "seed", c.seed);
    read(j, "", "output_dir", c.output_dir);

    if (j.contains("simulate")) {
        const auto& s = object_at(j["simulate"], "simulate", {"steps"});
        read(s, "simulate", "steps", c.simulate_steps);
    }
    if (j.contains("dataset")) {
        const auto& d = object_at(j["dataset"], "dataset", {"mode", "size", "prior_mean", "prior_variance"});
        std::string mode = to_string(c.dataset.mode);
        read(d, "dataset", "mode", mode);
        validate_at("dataset", [&] { c.dataset.mode = dataset_mode_from_string(mode); });
        read(d, "dataset", "size", c.dataset.size);
        read(d, "dataset", "prior_mean", c.dataset.prior_mean);
        read(d, "dataset", "prior_variance", c.dataset.prior_variance);
    }
    if (j.contains("architecture")) {
        const auto& a = object_at(j["architecture"], "architecture",
                                  {"window", "feature_dim", "noise_dim", "phi_hidden", "psi_hidden"});
        auto& arch = c.architecture;
        read(a, "architecture", "window", arch.window);
        read(a, "architecture", "feature_dim", arch.feature_dim);
        read(a, "architecture", "noise_dim", arch.noise_dim);
        read(a, "architecture", "phi_hidden", arch.phi_hidden);
        read(a, "architecture", "psi_hidden", arch.psi_hidden);
    }
    if (j.contains("training")) {
        const auto& t = object_at(j["training"], "training", {"lambda", "k_noise", "batch_size", "iterations", "adam"});
        auto& tr = c.training;
        read(t, "training", "lambda", tr.lambda);
        read(t, "training", "k_noise", tr.k_noise);
        read(t, "training", "batch_size", tr.batch_size);
        read(t, "training", "iterations", tr.iterations);
        if (t.contains("adam")) {
            const auto& a = object_at(t["adam"], "training.adam",
                                      {"learning_rate", "beta1", "beta2", "epsilon", "decay_rate", "decay_every"});
            read(a, "training.adam", "learning_rate", tr.adam.learning_rate);
            read(a, "training.adam", "beta1", tr.adam.beta1);
            read(a, "training.adam", "beta2", tr.adam.beta2);
            read(a, "training.adam", "epsilon", tr.adam.epsilon);
            read(a, "training.adam", "decay_rate", tr.adam.decay_rate);
            read(a, "training.adam", "decay_every", tr.adam.decay_every);
        }
    }
    if (j.contains("evaluation")) {
        const auto& e = object_at(j["evaluation"], "evaluation",
                                  {"grid", "quadrature", "samples_per_point", "mc_samples", "ngf_degrees"});
        auto& ev = c.evaluation;
        if (e.contains("grid")) {
            const auto& g = object_at(e["grid"], "evaluation.grid", {"lo", "hi", "count"});
            read(g, "evaluation.grid", "lo", ev.grid.lo);
            read(g, "evaluation.grid", "hi", ev.grid.hi);
            read(g, "evaluation.grid", "count", ev.grid.count);
        }
        if (e.contains("quadrature")) {
            const auto& q = object_at(e["quadrature"], "evaluation.quadrature", {"x_min", "x_max", "nodes"});
            read(q, "evaluation.quadrature", "x_min", ev.quadrature.x_min);
            read(q, "evaluation.quadrature", "x_max", ev.quadrature.x_max);
            read(q, "evaluation.quadrature", "nodes", ev.quadrature.nodes);
        }
        read(e, "evaluation", "samples_per_point", ev.samples_per_point);
        read(e, "evaluation", "mc_samples", ev.mc_samples);
        read(e, "evaluation", "ngf_degrees", ev.ngf_degrees);
    }

    c.training.seed = c.seed;
    c.training.dataset_mode = c.dataset.mode;
    c.validate();
    return c;
}

json to_json(const RunConfig& c)
{
    const auto& tr = c.training;
    const auto& ev = c.evaluation;
    return {{"system", c.system},
            {"seed", c.seed},
            {"output_dir", c.output_dir},
            {"simulate", {{"steps", c.simulate_steps}}},
            {"dataset",
             {{"mode", to_string(c.dataset.mode)},
              {"size", c.dataset.size},
              {"prior_mean", c.dataset.prior_mean},
              {"prior_variance", c.dataset.prior_variance}}},
            {"architecture", to_json(c.architecture)},
            {"training",
             {{"lambda", tr.lambda},
              {"k_noise", tr.k_noise},
              {"batch_size", tr.batch_size},
              {"iterations", tr.iterations},
              {"adam", to_json(tr.adam)}}},
            {"evaluation",
             {{"grid", {{"lo", ev.grid.lo}, {"hi", ev.grid.hi}, {"count", ev.grid.count}}},
              {"quadrature",
               {{"x_min", ev.quadrature.x_min}, {"x_max", ev.quadrature.x_max}, {"nodes", ev.quadrature.nodes}}},
              {"samples_per_point", ev.samples_per_point},
              {"mc_samples", ev.mc_samples},
              {"ngf_degrees", ev.ngf_degrees}}}};
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    const std::string text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

} // namespace ifilter
