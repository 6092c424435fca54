#include "imargin/random.hpp"

#include "imargin/normal.hpp"

namespace imargin {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed;
    const std::uint64_t a = splitmix64(state);
    state = a ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
    return splitmix64(state);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

double Rng::uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return norm_inv(uniform()); }

}  // namespace imargin
