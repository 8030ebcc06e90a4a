#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace tem {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter counter, Key key);
};

/// Brownian increments for one path, as a pure function of
/// (master seed, stream id, path index, increment index, component).
///
/// The path is generated on a base grid of spacing 1/base_resolution. Base
/// increments are N(0, 1/base_resolution) draws rounded to multiples of
/// 2^-40, so any increment at a coarser resolution (the sum of the base
/// increments it covers) is exact in double precision whatever the summation
/// order: sub-increments of a step always add up bitwise to the step.
class NoiseStream {
public:
    static constexpr const char* generator_id = "philox4x32-10/box-muller/quantum=2^-40";

    NoiseStream(std::uint64_t master_seed, std::uint32_t path_index, std::size_t dim, int base_resolution,
                std::uint32_t stream_id = 0);

    std::uint64_t master_seed() const { return seed_; }
    std::uint32_t path_index() const { return path_; }
    std::uint32_t stream_id() const { return stream_; }
    std::size_t dim() const { return dim_; }
    int base_resolution() const { return base_; }

    /// Standard normal for (index, component) before scaling.
    double standard_normal(std::int64_t index, std::size_t component) const;

    /// B((index+1)/base) - B(index/base) for one component.
    double base_increment(std::int64_t index, std::size_t component) const;

    /// B((step+1)/resolution) - B(step/resolution); `resolution` must divide
    /// the base resolution. Throws ConfigError otherwise.
    void increment(std::int64_t step, int resolution, std::span<double> out) const;

    /// Same stream with another path index (sharing seed, stream id, grid).
    NoiseStream with_path(std::uint32_t path_index) const;

private:
    std::uint64_t seed_;
    std::uint32_t path_;
    std::size_t dim_;
    int base_;
    std::uint32_t stream_;
    double scale_;
};

/// SplitMix64 finalizer; derives independent 64-bit seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace tem
