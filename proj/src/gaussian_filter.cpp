#include "ifilter/gaussian_filter.hpp"

#include "ifilter/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ifilter {

namespace {

constexpr std::size_t kChunkSize = 1 << 16;

Vector json_vector(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json json_matrix(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0)
{
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const auto cols = rows.empty() ? cols_if_empty : static_cast<Eigen::Index>(rows.front().size());
    Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != cols)
            throw ConfigError("matrix", "ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    return m;
}

} // namespace

Matrix GaussianMoments::joint_covariance() const
{
    const auto n = cov_xx.rows();
    const auto m = cov_ff.rows();
    Matrix joint(n + m, n + m);
    joint.topLeftCorner(n, n) = cov_xx;
    joint.topRightCorner(n, m) = cov_xf;
    joint.bottomLeftCorner(m, n) = cov_xf.transpose();
    joint.bottomRightCorner(m, m) = cov_ff;
    return joint;
}

MomentAccumulator::MomentAccumulator(int state_dim, int feature_dim)
    : state_dim_(state_dim), feature_dim_(feature_dim),
      mean_(Vector::Zero(state_dim + feature_dim)),
      comoment_(Matrix::Zero(state_dim + feature_dim, state_dim + feature_dim))
{
    if (state_dim < 1 || feature_dim < 1)
        throw std::invalid_argument("MomentAccumulator: dimensions must be positive");
}

void MomentAccumulator::add(const Matrix& states, const Matrix& features)
{
    if (states.rows() != state_dim_ || features.rows() != feature_dim_ || states.cols() != features.cols())
        throw std::invalid_argument("MomentAccumulator::add: shape mismatch");
    if (!states.allFinite() || !features.allFinite())
        throw NumericalError("fit_moments: non-finite sample");
    if (states.cols() == 0)
        return;

    MomentAccumulator chunk(state_dim_, feature_dim_);
    Matrix joint(state_dim_ + feature_dim_, states.cols());
    joint.topRows(state_dim_) = states;
    joint.bottomRows(feature_dim_) = features;
    chunk.count_ = static_cast<std::size_t>(joint.cols());
    chunk.mean_ = joint.rowwise().mean();
    joint.colwise() -= chunk.mean_;
    chunk.comoment_.noalias() = joint * joint.transpose();
    merge(chunk);
}

void MomentAccumulator::merge(const MomentAccumulator& other)
{
    if (other.state_dim_ != state_dim_ || other.feature_dim_ != feature_dim_)
        throw std::invalid_argument("MomentAccumulator::merge: dimension mismatch");
    if (other.count_ == 0)
        return;
    if (count_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const Vector delta = other.mean_ - mean_;
    mean_ += delta * (nb / n);
    comoment_ += other.comoment_ + delta * delta.transpose() * (na * nb / n);
    count_ += other.count_;
}

GaussianMoments MomentAccumulator::finish() const
{
    const auto required = static_cast<std::size_t>(state_dim_ + feature_dim_ + 1);
    if (count_ < required)
        throw NumericalError("fit_moments: " + std::to_string(count_) + " samples, need at least " +
                             std::to_string(required));
    const Matrix cov = comoment_ / static_cast<double>(count_ - 1);
    GaussianMoments m;
    m.mean_x = mean_.head(state_dim_);
    m.mean_f = mean_.tail(feature_dim_);
    m.cov_xx = cov.topLeftCorner(state_dim_, state_dim_);
    m.cov_xf = cov.topRightCorner(state_dim_, feature_dim_);
    m.cov_ff = cov.bottomRightCorner(feature_dim_, feature_dim_);
    // exact symmetry
    m.cov_xx = 0.5 * (m.cov_xx + m.cov_xx.transpose());
    m.cov_ff = 0.5 * (m.cov_ff + m.cov_ff.transpose());
    m.sample_count = count_;
    return m;
}

GaussianMoments fit_moments(const Matrix& states, const Matrix& features)
{
    MomentAccumulator acc(static_cast<int>(states.rows()), static_cast<int>(features.rows()));
    acc.add(states, features);
    return acc.finish();
}

ConditionalGaussian condition(const GaussianMoments& moments)
{
    const auto m = moments.cov_ff.rows();
    const Vector scale = moments.cov_ff.diagonal().cwiseMax(0.0).cwiseSqrt();
    if ((scale.array() <= 0.0).any() || !scale.allFinite()) {
        const double smallest = Eigen::SelfAdjointEigenSolver<Matrix>(moments.cov_ff, Eigen::EigenvaluesOnly)
                                    .eigenvalues()
                                    .minCoeff();
        throw NumericalError("condition: feature covariance is singular (smallest eigenvalue " +
                             std::to_string(smallest) + ")");
    }
    const Vector inv_scale = scale.cwiseInverse();

    Matrix corr = inv_scale.asDiagonal() * moments.cov_ff * inv_scale.asDiagonal();
    corr.diagonal().array() += kConditioningRidge * corr.trace() / static_cast<double>(m);

    const double smallest =
        Eigen::SelfAdjointEigenSolver<Matrix>(corr, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (!(smallest > 0.0))
        throw NumericalError("condition: standardized feature covariance is singular after regularization "
                             "(smallest eigenvalue " + std::to_string(smallest) + ")");

    const Eigen::LDLT<Matrix> ldlt(corr);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("condition: LDLT factorization failed (smallest eigenvalue " +
                             std::to_string(smallest) + ")");

    // gain = cov_xf S^-1 (S^-1 cov_ff S^-1)^-1 S^-1
    const Matrix scaled_xf = moments.cov_xf * inv_scale.asDiagonal();
    const Matrix gain_std = ldlt.solve(scaled_xf.transpose()).transpose();

    ConditionalGaussian out;
    out.gain = gain_std * inv_scale.asDiagonal();
    out.offset = moments.mean_x - out.gain * moments.mean_f;
    out.cov = moments.cov_xx - gain_std * scaled_xf.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

Vector poly_features(const Vector& y, int degree)
{
    if (degree < 1)
        throw ConfigError("degree", "must be >= 1");
    Vector f(y.size() * degree);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double p = 1.0;
        for (int d = 0; d < degree; ++d) {
            p *= y[i];
            f[i * degree + d] = p;
        }
    }
    return f;
}

PolynomialGaussianFilter gf_posterior(const SystemModel& system, const Gaussian& prior, int degree,
                                      std::size_t mc_samples, RngStream rng)
{
    system.validate();
    if (degree < 1)
        throw ConfigError("degree", "must be >= 1");
    const int feature_dim = system.obs_dim * degree;
    if (mc_samples < static_cast<std::size_t>(system.state_dim + feature_dim + 1))
        throw ConfigError("mc_samples", "too few samples to fit moments");

    MomentAccumulator acc(system.state_dim, feature_dim);
    std::size_t done = 0;
    for (std::uint64_t chunk = 0; done < mc_samples; ++chunk) {
        const std::size_t n = std::min(kChunkSize, mc_samples - done);
        const auto pairs = sample_iid_pairs(system, prior, n, rng.substream(chunk));
        Matrix xs(system.state_dim, static_cast<Eigen::Index>(n));
        Matrix fs(feature_dim, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            xs.col(static_cast<Eigen::Index>(i)) = pairs[i].state;
            fs.col(static_cast<Eigen::Index>(i)) = poly_features(pairs[i].observation, degree);
        }
        acc.add(xs, fs);
        done += n;
    }

    PolynomialGaussianFilter out;
    out.posterior = condition(acc.finish());
    out.degree = degree;
    out.mc_samples = mc_samples;
    out.seed = rng.seed();
    return out;
}

nlohmann::json to_json(const PolynomialGaussianFilter& f)
{
    const auto& p = f.posterior;
    return {{"degree", f.degree},
            {"mc_samples", f.mc_samples},
            {"seed", f.seed},
            {"gain", json_matrix(p.gain)},
            {"offset", std::vector<double>(p.offset.data(), p.offset.data() + p.offset.size())},
            {"cov", json_matrix(p.cov)}};
}

PolynomialGaussianFilter polynomial_filter_from_json(const nlohmann::json& j)
{
    PolynomialGaussianFilter f;
    f.degree = j.at("degree").get<int>();
    f.mc_samples = j.at("mc_samples").get<std::size_t>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.posterior.gain = matrix_from_json(j.at("gain"));
    f.posterior.offset = json_vector(j.at("offset"));
    f.posterior.cov = matrix_from_json(j.at("cov"));
    return f;
}

} // namespace ifilter
