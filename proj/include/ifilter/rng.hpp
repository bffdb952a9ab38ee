#pragma once

#include <cstdint>
#include <optional>

namespace ifilter {

/// Counter-based random stream.
///
/// Draw i of stream (seed, stream_id) is splitmix64(key + i * gamma) where key
/// mixes seed and stream_id. The generator is fully specified here, so draws are
/// reproducible across platforms up to the libm used for the Box-Muller transform.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() noexcept;

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t index(std::uint64_t n) noexcept;

    /// Independent child stream; does not advance this stream.
    RngStream substream(std::uint64_t child) const noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

} // namespace ifilter
