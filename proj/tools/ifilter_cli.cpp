// ifilter: simulate, train, and compare posterior estimators on the Heaviside benchmark.

#include "ifilter/config.hpp"
#include "ifilter/errors.hpp"
#include "ifilter/io.hpp"
#include "ifilter/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace ifilter;

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

RunConfig resolve(const CommonOptions& opts)
{
    nlohmann::json j = nlohmann::json::object();
    if (!opts.config_path.empty()) {
        try {
            j = nlohmann::json::parse(read_text_file(opts.config_path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
        }
    }
    if (opts.seed)
        j["seed"] = *opts.seed;
    if (!opts.out_dir.empty())
        j["output_dir"] = opts.out_dir;
    return run_config_from_json(j);
}

/// Prints the resolved config and stores it next to the outputs.
void echo(const RunConfig& config, const char* command)
{
    const std::string text = to_json(config).dump(2) + "\n";
    std::cout << "# " << command << " effective config\n" << text;
    write_text_file(fs::path(config.output_dir) / (std::string(command) + "_config.json"), text);
}

int cmd_simulate(const RunConfig& config)
{
    echo(config, "simulate");
    const auto traj = simulate_from_config(config);
    const auto path = fs::path(config.output_dir) / "trajectory.csv";
    write_text_file(path, trajectory_csv(traj));
    std::cout << "wrote " << traj.size() << " rows to " << path.string() << " (seed " << config.seed << ")\n";
    return kOk;
}

int cmd_train(const RunConfig& config)
{
    echo(config, "train");
    const auto result = train_from_config(config);
    const fs::path dir(config.output_dir);
    write_text_file(dir / "model.json", checkpoint_json(result, config.training).dump(1) + "\n");
    write_text_file(dir / "loss_history.csv", loss_history_csv(result.history));
    const auto& first = result.history.front().loss;
    const auto& last = result.history.back().loss;
    std::cout << "trained " << result.history.size() << " iterations; delta_pq " << format_real(first.delta_pq)
              << " -> " << format_real(last.delta_pq) << ", delta_qq " << format_real(first.delta_qq) << " -> "
              << format_real(last.delta_qq) << "\n";
    return kOk;
}

void write_sweeps(const RunConfig& config, const std::vector<SweepResult>& sweeps, const std::string& stem)
{
    const fs::path dir(config.output_dir);
    write_text_file(dir / (stem + ".csv"), sweep_csv(sweeps));
    const auto summary = sweep_summary_json(sweeps);
    write_text_file(dir / (stem + "_summary.json"), summary.dump(2) + "\n");
    for (const auto& s : sweeps)
        std::cout << s.rows.front().method << ": rmse_mean_vs_oracle " << format_real(s.rmse_mean_vs_oracle)
                  << ", rmse_std_vs_oracle " << format_real(s.rmse_std_vs_oracle) << "\n";
}

int cmd_compare(const RunConfig& config, const std::string& checkpoint)
{
    echo(config, "compare");
    const fs::path path = checkpoint.empty() ? fs::path(config.output_dir) / "model.json" : fs::path(checkpoint);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("checkpoint", std::string("invalid JSON: ") + e.what());
    }
    const auto model = model_from_checkpoint(j);
    write_sweeps(config, compare_methods(config, model), "sweep");
    return kOk;
}

int cmd_oracle(const RunConfig& config)
{
    echo(config, "oracle");
    const auto grid = config.evaluation_grid();
    for (double y : grid) {
        if (oracle_posterior(y, config.evaluation_prior(), config.evaluation.quadrature).outside_support)
            std::cerr << "warning: observation y = " << format_real(y) << " is outside the support of the prior\n";
    }
    write_sweeps(config, {oracle_sweep(config)}, "oracle");
    return kOk;
}

int cmd_expect(const RunConfig& config, const std::string& name, std::size_t n)
{
    echo(config, "expect");
    Integrand g;
    if (name == "one")
        g = [](const Vector&, const Vector&) { return 1.0; };
    else if (name == "x")
        g = [](const Vector& x, const Vector&) { return x[0]; };
    else if (name == "y")
        g = [](const Vector&, const Vector& y) { return y[0]; };
    else if (name == "x2")
        g = [](const Vector& x, const Vector&) { return x[0] * x[0]; };
    else if (name == "y2")
        g = [](const Vector&, const Vector& y) { return y[0] * y[0]; };
    else if (name == "xy")
        g = [](const Vector& x, const Vector& y) { return x[0] * y[0]; };
    else
        throw ConfigError("--g", "unknown integrand '" + name + "' (one, x, y, x2, y2, xy)");
    const std::size_t count = n > 0 ? n : config.evaluation.mc_samples;
    const auto e = mc_expectation(g, config.make_system(), config.evaluation_prior(), count,
                                  RngStream(config.seed, kExpectStream));
    std::cout << "E[" << name << "] = " << format_real(e.value) << " +/- " << format_real(e.std_error) << " (n = "
              << e.samples << ")\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Posterior estimation for the Heaviside benchmark: oracle, GF/NGF and the implicit sampler"};
    app.require_subcommand(1);

    CommonOptions opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--out", opts.out_dir, "override output_dir");
    };

    auto* simulate = app.add_subcommand("simulate", "roll out the system and write trajectory.csv");
    auto* train = app.add_subcommand("train", "train the implicit filter; writes model.json and loss_history.csv");
    auto* compare = app.add_subcommand("compare", "score oracle, GF, NGF and implicit on the evaluation grid");
    auto* oracle = app.add_subcommand("oracle", "write the quadrature oracle sweep only");
    auto* expect = app.add_subcommand("expect", "Monte-Carlo expectation of a built-in integrand");
    for (auto* sub : {simulate, train, compare, oracle, expect})
        add_common(sub);

    std::string checkpoint;
    compare->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.json)");
    std::string integrand = "y";
    std::size_t samples = 0;
    expect->add_option("--g", integrand, "one, x, y, x2, y2 or xy");
    expect->add_option("-n,--samples", samples, "sample count (default evaluation.mc_samples)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        const RunConfig config = resolve(opts);
        if (*simulate)
            return cmd_simulate(config);
        if (*train)
            return cmd_train(config);
        if (*compare)
            return cmd_compare(config, checkpoint);
        if (*oracle)
            return cmd_oracle(config);
        return cmd_expect(config, integrand, samples);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
}
