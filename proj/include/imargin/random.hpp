#pragma once

#include <cstdint>
#include <random>

namespace imargin {

std::uint64_t splitmix64(std::uint64_t& state);

// Seed of an independent sub-stream; mixing both words keeps neighbouring
// (seed, stream) pairs uncorrelated.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

// mt19937_64 with platform-independent uniform and normal draws. The
// standard distributions are implementation-defined, so normals come from
// the inverse CDF instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    // Uniform on the open interval (0,1).
    double uniform();
    double normal();

private:
    std::mt19937_64 engine_;
};

}  // namespace imargin
