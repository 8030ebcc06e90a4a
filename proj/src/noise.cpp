#include "tem/noise.hpp"

#include <cmath>
#include <numbers>

#include "tem/errors.hpp"

namespace tem {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

// Increments live on this lattice: 2^-40.
constexpr double kQuantum = 1.0 / 1099511627776.0;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// 53 random bits -> (0, 1].
inline double open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

NoiseStream::NoiseStream(std::uint64_t master_seed, std::uint32_t path_index, std::size_t dim, int base_resolution,
                         std::uint32_t stream_id)
    : seed_(master_seed), path_(path_index), dim_(dim), base_(base_resolution), stream_(stream_id) {
    if (dim == 0) {
        throw ConfigError("noise dimension must be positive");
    }
    if (base_resolution <= 0) {
        throw ConfigError("noise base resolution must be positive");
    }
    if (stream_id >= (1u << 24)) {
        throw ConfigError("stream id must fit in 24 bits");
    }
    scale_ = std::sqrt(1.0 / base_resolution);
}

double NoiseStream::standard_normal(std::int64_t index, std::size_t component) const {
    const auto idx = static_cast<std::uint64_t>(index);
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32), path_,
                                  (stream_ << 8) | static_cast<std::uint32_t>(component / 2)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const auto out = Philox4x32::generate(ctr, key);
    const double u1 = open_unit(out[0], out[1]);
    const double u2 = open_unit(out[2], out[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return component % 2 == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
}

double NoiseStream::base_increment(std::int64_t index, std::size_t component) const {
    return std::nearbyint(scale_ * standard_normal(index, component) / kQuantum) * kQuantum;
}

void NoiseStream::increment(std::int64_t step, int resolution, std::span<double> out) const {
    if (out.size() != dim_) {
        throw DimensionMismatch("noise output has wrong dimension");
    }
    if (resolution <= 0 || base_ % resolution != 0) {
        throw ConfigError("resolution " + std::to_string(resolution) + " does not divide the noise base resolution " +
                          std::to_string(base_));
    }
    const std::int64_t m = base_ / resolution;
    for (std::size_t c = 0; c < dim_; ++c) {
        double sum = 0.0;
        for (std::int64_t s = 0; s < m; ++s) {
            sum += base_increment(step * m + s, c);
        }
        out[c] = sum;
    }
}

NoiseStream NoiseStream::with_path(std::uint32_t path_index) const {
    return NoiseStream(seed_, path_index, dim_, base_, stream_);
}

}  // namespace tem
