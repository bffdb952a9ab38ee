#include "ifilter/errors.hpp"
#include "ifilter/implicit_filter.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace ifilter;

namespace {

/// phi: 1 -> 1 (zero), psi: [feature, z] -> z. Samples equal the noise.
ImplicitFilterModel identity_noise_model()
{
    ImplicitFilterModel m;
    m.phi = mlp_zeros({1, 1});
    m.psi = mlp_zeros({2, 1});
    m.psi.layers[0].weight(0, 1) = 1.0;
    m.noise_dim = 1;
    m.window = 1;
    return m;
}

StateObservation pair(double x, double y)
{
    return {Vector::Constant(1, x), Vector::Constant(1, y)};
}

ArchitectureConfig small_arch()
{
    ArchitectureConfig a;
    a.feature_dim = 3;
    a.noise_dim = 2;
    a.phi_hidden = {6};
    a.psi_hidden = {6};
    return a;
}

double relative_error(const Vector& a, const Vector& b)
{
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Vector concat(const Vector& a, const Vector& b)
{
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

/// Central differences of the total loss over [phi params, psi params].
Vector fd_loss_gradient(ImplicitFilterModel m, const std::vector<StateObservation>& batch, const Matrix& noise, int k,
                        double lambda, double h)
{
    const Vector phi0 = m.phi.flatten();
    const Vector psi0 = m.psi.flatten();
    Vector grad(phi0.size() + psi0.size());
    auto eval = [&](const Vector& phi, const Vector& psi) {
        m.phi.assign_flat(phi);
        m.psi.assign_flat(psi);
        return empirical_loss(m, batch, noise, k, lambda).total;
    };
    for (Eigen::Index i = 0; i < phi0.size(); ++i) {
        Vector up = phi0;
        Vector down = phi0;
        up[i] += h;
        down[i] -= h;
        grad[i] = (eval(up, psi0) - eval(down, psi0)) / (2.0 * h);
    }
    for (Eigen::Index i = 0; i < psi0.size(); ++i) {
        Vector up = psi0;
        Vector down = psi0;
        up[i] += h;
        down[i] -= h;
        grad[phi0.size() + i] = (eval(phi0, up) - eval(phi0, down)) / (2.0 * h);
    }
    return grad;
}

std::vector<StateObservation> benchmark_data(std::size_t n, std::uint64_t seed)
{
    return make_training_set(benchmark_system(), DatasetMode::iid, n, Gaussian::scalar(0.0, 5.0), 1, RngStream(seed));
}

} // namespace

// =============================================================================
// loss values
// =============================================================================

TEST(EmpiricalLoss, HandCheck)
{
    const auto m = identity_noise_model();
    const Matrix noise = (Matrix(1, 2) << 1.0, -1.0).finished();
    const std::vector<StateObservation> batch{pair(0.0, 0.0)};
    const auto r = empirical_loss(m, batch, noise, 2, 1.0);
    EXPECT_EQ(r.delta_pq, 1.0);
    EXPECT_EQ(r.delta_qq, 4.0);
    EXPECT_EQ(r.total, -3.0);
    EXPECT_EQ(empirical_loss(m, batch, noise, 2, 0.0).total, 1.0);
}

TEST(EmpiricalLoss, PerfectDeterministicFit)
{
    // psi ignores z and returns its bias; every datum has x equal to that bias
    auto m = identity_noise_model();
    m.psi.layers[0].weight.setZero();
    m.psi.layers[0].bias[0] = 2.5;
    const std::vector<StateObservation> batch{pair(2.5, -1.0), pair(2.5, 4.0)};
    const Matrix noise = (Matrix(1, 6) << 0.1, -2.0, 3.0, 0.4, 0.5, -0.6).finished();
    const auto r = empirical_loss(m, batch, noise, 3, 1.0);
    EXPECT_EQ(r.delta_pq, 0.0);
    EXPECT_EQ(r.delta_qq, 0.0);
    EXPECT_EQ(r.total, 0.0);
}

TEST(EmpiricalLoss, ArgumentChecks)
{
    const auto m = identity_noise_model();
    const std::vector<StateObservation> batch{pair(0.0, 0.0)};
    EXPECT_THROW(empirical_loss(m, batch, Matrix::Zero(1, 1), 1, 1.0), ConfigError);
    EXPECT_NO_THROW(empirical_loss(m, batch, Matrix::Zero(1, 1), 1, 0.0));
    EXPECT_THROW(empirical_loss(m, batch, Matrix::Zero(1, 3), 2, 1.0), std::invalid_argument);
    EXPECT_THROW(empirical_loss(m, {{Vector::Zero(1), Vector::Zero(2)}}, Matrix::Zero(1, 2), 2, 1.0),
                 std::invalid_argument);
}

TEST(EmpiricalLoss, NonNegativeTermsAndPermutationInvariance)
{
    const RngStream root(404);
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        RngStream rng = root.substream(trial);
        const auto m = make_implicit_model(1, 2, small_arch(), rng.substream(0));
        std::vector<StateObservation> batch;
        for (int n = 0; n < 3; ++n)
            batch.push_back({Vector::Constant(2, rng.normal()), Vector::Constant(1, rng.normal())});
        constexpr int k = 5;
        Matrix noise = draw_noise(m.noise_dim, batch.size(), k, rng);
        const auto r = empirical_loss(m, batch, noise, k, 1.3);
        EXPECT_GE(r.delta_pq, 0.0);
        EXPECT_GE(r.delta_qq, 0.0);

        // reverse the draws within every datum's block
        Matrix permuted = noise;
        for (std::size_t n = 0; n < batch.size(); ++n)
            for (int j = 0; j < k; ++j)
                permuted.col(static_cast<Eigen::Index>(n) * k + j) =
                    noise.col(static_cast<Eigen::Index>(n) * k + (k - 1 - j));
        const auto p = empirical_loss(m, batch, permuted, k, 1.3);
        EXPECT_NEAR(p.delta_qq, r.delta_qq, 1e-12 * (1.0 + r.delta_qq));
        EXPECT_NEAR(p.delta_pq, r.delta_pq, 1e-12 * (1.0 + r.delta_pq));
    }
}

// =============================================================================
// gradient
// =============================================================================

TEST(LossGradient, MatchesFiniteDifferences)
{
    const RngStream root(5150);
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        RngStream rng = root.substream(trial);
        auto arch = small_arch();
        arch.window = 1 + static_cast<int>(rng.index(2));
        const int state_dim = 1 + static_cast<int>(rng.index(2));
        const int k = 2 + static_cast<int>(rng.index(4));
        const double lambda = 2.0 * rng.uniform();
        auto m = make_implicit_model(1, state_dim, arch, rng.substream(0));
        for (auto* net : {&m.phi, &m.psi})
            for (auto& l : net->layers)
                for (Eigen::Index i = 0; i < l.bias.size(); ++i)
                    l.bias[i] = 0.3 * rng.normal();

        std::vector<StateObservation> batch;
        const int n = 1 + static_cast<int>(rng.index(4));
        for (int i = 0; i < n; ++i) {
            Vector x(state_dim);
            Vector y(arch.window);
            for (auto& v : x)
                v = rng.normal();
            for (auto& v : y)
                v = rng.normal(0.0, 2.0);
            batch.push_back({x, y});
        }
        const Matrix noise = draw_noise(m.noise_dim, batch.size(), k, rng);
        const auto g = loss_gradient(m, batch, noise, k, lambda);
        const Vector analytic = concat(g.phi.flatten(), g.psi.flatten());
        ASSERT_LT(relative_error(analytic, fd_loss_gradient(m, batch, noise, k, lambda, 1e-5)), 1e-5)
            << "trial " << trial;
        EXPECT_EQ(g.report.total, empirical_loss(m, batch, noise, k, lambda).total);
    }
}

TEST(LossGradient, LambdaZeroSingleDrawIsMseGradient)
{
    RngStream rng(12);
    const auto m = make_implicit_model(1, 1, small_arch(), rng.substream(0));
    const std::vector<StateObservation> batch{pair(0.3, 1.0), pair(-2.0, -0.5), pair(1.1, 4.0)};
    const Matrix noise = draw_noise(m.noise_dim, batch.size(), 1, rng);
    const auto g = loss_gradient(m, batch, noise, 1, 0.0);

    // direct MSE backprop through psi then phi
    Matrix y(1, 3);
    Matrix x(1, 3);
    for (int n = 0; n < 3; ++n) {
        y(0, n) = batch[static_cast<std::size_t>(n)].observation[0];
        x(0, n) = batch[static_cast<std::size_t>(n)].state[0];
    }
    const Matrix features = mlp_forward(m.phi, y);
    Matrix psi_in(features.rows() + noise.rows(), 3);
    psi_in << features, noise;
    const Matrix pred = mlp_forward(m.psi, psi_in);
    const Matrix cot = 2.0 * (pred - x) / 3.0;
    const auto psi_back = mlp_backward(m.psi, psi_in, cot);
    const auto phi_back = mlp_backward(m.phi, y, psi_back.input_cotangent.topRows(features.rows()));

    EXPECT_LT(relative_error(g.psi.flatten(), psi_back.grad.flatten()), 1e-13);
    EXPECT_LT(relative_error(g.phi.flatten(), phi_back.grad.flatten()), 1e-13);
    EXPECT_NEAR(g.report.total, (pred - x).squaredNorm() / 3.0, 1e-13);
}

TEST(LossGradient, SymmetricStationaryPoint)
{
    // samples +-w around x = 0 with K = 2, lambda = 1/4: attraction and repulsion cancel
    auto m = identity_noise_model();
    m.psi.layers[0].weight(0, 1) = 0.8;
    const std::vector<StateObservation> batch{pair(0.0, 1.0)};
    const Matrix noise = (Matrix(1, 2) << 1.3, -1.3).finished();
    const auto g = loss_gradient(m, batch, noise, 2, 0.25);
    EXPECT_LT(std::hypot(g.phi.flatten().norm(), g.psi.flatten().norm()), 1e-8);
}

// =============================================================================
// sampling
// =============================================================================

TEST(SamplePosterior, DeterministicGivenNoise)
{
    const auto m = make_implicit_model(1, 1, ArchitectureConfig{}, RngStream(1));
    const Matrix z = Matrix::Zero(m.noise_dim, 1);
    const Vector y = Vector::Constant(1, 0.7);
    EXPECT_EQ(sample_posterior(m, y, z), sample_posterior(m, y, z));
    EXPECT_EQ(sample_posterior(m, y, 5, RngStream(2)), sample_posterior(m, y, 5, RngStream(2)));
    EXPECT_THROW(sample_posterior(m, Vector::Zero(2), z), std::invalid_argument);
}

TEST(SamplePosterior, ZeroPsiReturnsBias)
{
    auto m = make_implicit_model(1, 2, small_arch(), RngStream(3));
    m.psi = m.psi.zeros_like();
    m.psi.layers.back().bias << 1.5, -0.25;
    const Matrix s = sample_posterior(m, Vector::Constant(1, 3.0), 10, RngStream(4));
    for (Eigen::Index c = 0; c < s.cols(); ++c)
        EXPECT_EQ(Vector(s.col(c)), m.psi.layers.back().bias);
    EXPECT_TRUE(summarize_samples(s).stddev.isZero());
}

TEST(SummarizeSamples, HandArithmetic)
{
    const auto s = summarize_samples((Matrix(1, 2) << 1.0, 3.0).finished());
    EXPECT_EQ(s.mean[0], 2.0);
    EXPECT_NEAR(s.stddev[0], std::sqrt(2.0), 1e-15);
    EXPECT_THROW(posterior_summary(identity_noise_model(), Vector::Zero(1), 1, RngStream(0)), std::invalid_argument);
}

// =============================================================================
// training
// =============================================================================

TEST(Train, SeedsReproduceHistories)
{
    const auto data = benchmark_data(200, 1);
    TrainConfig c;
    c.iterations = 25;
    c.seed = 9;
    const auto a = train(data, 1, 1, small_arch(), c);
    const auto b = train(data, 1, 1, small_arch(), c);
    ASSERT_EQ(a.history.size(), 25u);
    EXPECT_EQ(loss_history_csv(a.history), loss_history_csv(b.history));
    EXPECT_EQ(a.model.psi.flatten(), b.model.psi.flatten());

    c.seed = 10;
    const auto d = train(data, 1, 1, small_arch(), c);
    EXPECT_NE(loss_history_csv(a.history), loss_history_csv(d.history));
}

TEST(Train, SingleIteration)
{
    TrainConfig c;
    c.iterations = 1;
    const auto r = train(benchmark_data(50, 2), 1, 1, small_arch(), c);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].effective_lr, 0.005);
    EXPECT_EQ(r.psi_optimizer.step_count, 1);
    EXPECT_EQ(loss_history_csv(r.history).substr(0, 40), "iter,delta_pq,delta_qq,total,effective_l");
}

TEST(Train, RejectsBadConfig)
{
    const auto data = benchmark_data(10, 3);
    TrainConfig c;
    c.batch_size = 20;
    EXPECT_THROW(train(data, 1, 1, small_arch(), c), ConfigError);
    c.batch_size = 5;
    c.k_noise = 1;
    EXPECT_THROW(train(data, 1, 1, small_arch(), c), ConfigError);
    c.lambda = -0.5;
    c.k_noise = 4;
    EXPECT_THROW(train(data, 1, 1, small_arch(), c), ConfigError);
}

TEST(Train, LambdaZeroSingleDrawIsLeastSquares)
{
    const auto data = benchmark_data(300, 4);
    TrainConfig c;
    c.lambda = 0.0;
    c.k_noise = 1;
    c.batch_size = 16;
    c.iterations = 150;
    c.seed = 21;
    const auto arch = small_arch();
    const auto trained = train(data, 1, 1, arch, c);

    // separately written regressor: same init, same minibatches and z, plain MSE backprop
    auto m = make_implicit_model(1, 1, arch, RngStream(c.seed));
    auto phi_opt = AdamState::fresh(m.phi, c.adam);
    auto psi_opt = AdamState::fresh(m.psi, c.adam);
    const RngStream root(c.seed, 3);
    const auto n = c.batch_size;
    for (int it = 0; it < c.iterations; ++it) {
        RngStream rng = root.substream(static_cast<std::uint64_t>(it));
        Matrix y(1, n);
        Matrix x(1, n);
        for (int i = 0; i < n; ++i) {
            const auto& d = data[rng.index(data.size())];
            y(0, i) = d.observation[0];
            x(0, i) = d.state[0];
        }
        const Matrix z = draw_noise(m.noise_dim, static_cast<std::size_t>(n), 1, rng);
        const Matrix features = mlp_forward(m.phi, y);
        Matrix psi_in(features.rows() + z.rows(), n);
        psi_in << features, z;
        const Matrix pred = mlp_forward(m.psi, psi_in);
        const Matrix cot = 2.0 * (pred - x) / static_cast<double>(n);
        const auto psi_back = mlp_backward(m.psi, psi_in, cot);
        const auto phi_back = mlp_backward(m.phi, y, psi_back.input_cotangent.topRows(features.rows()));
        adam_update(m.phi, phi_back.grad, phi_opt);
        adam_update(m.psi, psi_back.grad, psi_opt);
    }

    RngStream probe(77);
    for (int i = 0; i < 20; ++i) {
        const Vector y = Vector::Constant(1, probe.normal(2.5, 4.0));
        const Matrix z = draw_noise(m.noise_dim, 1, 1, probe);
        EXPECT_NEAR(sample_posterior(trained.model, y, z)(0, 0), sample_posterior(m, y, z)(0, 0), 1e-12);
    }
}

TEST(Train, LambdaZeroCollapsesOnDeterministicSystem)
{
    // y = x up to 1e-12 observation noise
    const auto system = linear_system(0.1, 1e-24);
    const auto data = make_training_set(system, DatasetMode::iid, 1000, Gaussian::scalar(0.0, 5.0), 1, RngStream(5));
    TrainConfig c;
    c.lambda = 0.0;
    c.k_noise = 4;
    c.iterations = 2000;
    auto arch = small_arch();
    arch.phi_hidden = {16, 16};
    arch.psi_hidden = {16, 16};
    const auto r = train(data, 1, 1, arch, c);
    for (double y : {-2.0, 0.0, 1.5})
        EXPECT_LT(posterior_summary(r.model, Vector::Constant(1, y), 1000, RngStream(6)).stddev[0], 0.05) << y;
}

TEST(Train, SpreadGrowsWithLambda)
{
    const auto data = benchmark_data(1000, 8);
    TrainConfig c;
    c.iterations = 600;
    c.seed = 3;
    std::vector<double> spread;
    for (double lambda : {0.0, 0.5, 1.0}) {
        c.lambda = lambda;
        const auto r = train(data, 1, 1, ArchitectureConfig{}, c);
        double s = 0.0;
        for (double y : {-3.0, 2.5, 8.0})
            s += posterior_summary(r.model, Vector::Constant(1, y), 1000, RngStream(1)).stddev[0];
        spread.push_back(s);
    }
    EXPECT_LE(spread[0], spread[1]);
    EXPECT_LE(spread[1], spread[2]);
}

// =============================================================================
// datasets and checkpoints
// =============================================================================

TEST(MakeTrainingSet, Modes)
{
    const auto s = benchmark_system();
    const auto prior = Gaussian::scalar(0.0, 5.0);
    EXPECT_EQ(make_training_set(s, DatasetMode::iid, 100, prior, 1, RngStream(0)).size(), 100u);
    const auto traj = make_training_set(s, DatasetMode::trajectory, 100, prior, 3, RngStream(0));
    EXPECT_EQ(traj.size(), 98u);
    EXPECT_EQ(traj[0].observation.size(), 3);
    EXPECT_EQ(dataset_mode_from_string(to_string(DatasetMode::trajectory)), DatasetMode::trajectory);
    EXPECT_THROW(dataset_mode_from_string("batch"), ConfigError);
}

TEST(Checkpoint, RoundTrip)
{
    TrainConfig c;
    c.iterations = 3;
    const auto r = train(benchmark_data(100, 5), 1, 1, small_arch(), c);
    const auto text = checkpoint_json(r, c).dump();
    const auto m = model_from_checkpoint(nlohmann::json::parse(text));
    EXPECT_EQ(m.phi.flatten(), r.model.phi.flatten());
    EXPECT_EQ(m.psi.flatten(), r.model.psi.flatten());
    EXPECT_EQ(m.noise_dim, 2);
    const Vector y = Vector::Constant(1, 1.0);
    EXPECT_EQ(sample_posterior(m, y, 4, RngStream(1)), sample_posterior(r.model, y, 4, RngStream(1)));

    auto bad = nlohmann::json::parse(text);
    bad["format"] = "other";
    EXPECT_THROW(model_from_checkpoint(bad), ConfigError);
    bad = nlohmann::json::parse(text);
    bad["noise_dim"] = 3;
    EXPECT_THROW(model_from_checkpoint(bad), ConfigError);
}
