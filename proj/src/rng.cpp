#include "ifilter/rng.hpp"

#include <cmath>
#include <numbers>

namespace ifilter {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ULL;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id),
      key_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id * kStreamSalt + 1)))
{
}

std::uint64_t RngStream::next_u64() noexcept
{
    return splitmix64(key_ + (counter_++) * kGamma);
}

double RngStream::uniform() noexcept
{
    // top 53 bits, shifted by half an ulp so 0 is never returned
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept
{
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    return r * std::cos(theta);
}

std::uint64_t RngStream::index(std::uint64_t n) noexcept
{
    // Lemire's multiply-shift with rejection
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

RngStream RngStream::substream(std::uint64_t child) const noexcept
{
    return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(child + kStreamSalt)));
}

} // namespace ifilter
