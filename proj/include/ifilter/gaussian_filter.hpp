#pragma once

#include "ifilter/dynamics.hpp"
#include "ifilter/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>

namespace ifilter {

/// Joint first and second moments of (state, features).
struct GaussianMoments {
    Vector mean_x;
    Vector mean_f;
    Matrix cov_xx;
    Matrix cov_xf;
    Matrix cov_ff;
    std::size_t sample_count = 0;

    Matrix joint_covariance() const;
};

/// Streaming estimator of GaussianMoments. Chunks are merged with the pairwise
/// update of Chan et al., so the result does not depend on how the stream is split
/// beyond rounding.
class MomentAccumulator {
public:
    MomentAccumulator(int state_dim, int feature_dim);

    /// Columns of `states` and `features` are paired samples.
    void add(const Matrix& states, const Matrix& features);
    void merge(const MomentAccumulator& other);

    std::size_t count() const noexcept { return count_; }

    /// Unbiased (n-1) estimates. Throws NumericalError if count < state_dim + feature_dim + 1.
    GaussianMoments finish() const;

private:
    int state_dim_;
    int feature_dim_;
    std::size_t count_ = 0;
    Vector mean_;
    Matrix comoment_; // sum of outer products of deviations
};

/// Columns are samples. Requires at least state_dim + feature_dim + 1 samples, all finite.
GaussianMoments fit_moments(const Matrix& states, const Matrix& features);

/// q(x | f) = N(offset + gain f, cov).
struct ConditionalGaussian {
    Matrix gain;
    Vector offset;
    Matrix cov;

    Vector mean(const Vector& features) const { return offset + gain * features; }
    Vector stddev() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Relative ridge added to the standardized feature covariance before factorization.
inline constexpr double kConditioningRidge = 1e-9;

/// Gaussian conditioning of x on f. Features are standardized before inversion and
/// the scaling folded back into gain/offset. Throws NumericalError naming the smallest
/// eigenvalue when cov_ff is singular even after regularization.
ConditionalGaussian condition(const GaussianMoments& moments);

/// Per-component monomials [y, y^2, ..., y^degree], no cross terms and no constant.
Vector poly_features(const Vector& y, int degree);

/// A GF (degree 1) or NGF (degree > 1) posterior fitted by Monte Carlo.
struct PolynomialGaussianFilter {
    ConditionalGaussian posterior;
    int degree = 1;
    std::size_t mc_samples = 0;
    std::uint64_t seed = 0;

    Vector mean(const Vector& y) const { return posterior.mean(poly_features(y, degree)); }
};

/// Draws (x_t, y_t) from `prior` pushed through one transition and observation,
/// fits joint moments of (x, poly_features(y)) and conditions.
PolynomialGaussianFilter gf_posterior(const SystemModel& system, const Gaussian& prior, int degree,
                                      std::size_t mc_samples, RngStream rng);

nlohmann::json to_json(const PolynomialGaussianFilter& filter);
PolynomialGaussianFilter polynomial_filter_from_json(const nlohmann::json& j);

} // namespace ifilter
