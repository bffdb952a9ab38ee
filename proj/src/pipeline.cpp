#include "ifilter/pipeline.hpp"

namespace ifilter {

Trajectory simulate_from_config(const RunConfig& config)
{
    return simulate(config.make_system(), config.simulate_steps, RngStream(config.seed, kSimulateStream));
}

std::vector<StateObservation> training_set_from_config(const RunConfig& config)
{
    return make_training_set(config.make_system(), config.dataset.mode, config.dataset.size, config.dataset_prior(),
                             config.architecture.window, RngStream(config.seed, kDatasetStream));
}

TrainResult train_from_config(const RunConfig& config)
{
    const auto system = config.make_system();
    return train(training_set_from_config(config), system.obs_dim, system.state_dim, config.architecture,
                 config.training);
}

PolynomialGaussianFilter polynomial_filter_from_config(const RunConfig& config, int degree)
{
    // same stream for every degree, so degree 1 reproduces the GF exactly
    return gf_posterior(config.make_system(), config.dataset_prior(), degree, config.evaluation.mc_samples,
                        RngStream(config.seed, kMomentStream));
}

SweepResult oracle_sweep(const RunConfig& config)
{
    const auto grid = config.evaluation_grid();
    const auto evaluator = oracle_evaluator(config.evaluation_prior(), config.evaluation.quadrature);
    std::vector<PosteriorSummary> reference;
    reference.reserve(grid.size());
    for (double y : grid)
        reference.push_back(evaluator(y, RngStream(config.seed)));
    return sweep(evaluator, grid, reference, RngStream(config.seed, kSweepStream));
}

std::vector<SweepResult> compare_methods(const RunConfig& config, const ImplicitFilterModel& model)
{
    const auto grid = config.evaluation_grid();
    std::vector<SweepResult> out;
    out.push_back(oracle_sweep(config));
    const auto reference = out.front().rows;
    const RngStream rng(config.seed, kSweepStream);

    out.push_back(sweep(polynomial_evaluator(polynomial_filter_from_config(config, 1), "gf"), grid, reference, rng));
    for (int d : config.evaluation.ngf_degrees)
        out.push_back(sweep(polynomial_evaluator(polynomial_filter_from_config(config, d), "ngf-" + std::to_string(d)),
                            grid, reference, rng));
    out.push_back(sweep(implicit_evaluator(model, config.evaluation.samples_per_point), grid, reference, rng));
    return out;
}

} // namespace ifilter
