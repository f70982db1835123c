#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace evscale {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for subject `index` of a run seeded with `seed`.
/// Streams depend only on (seed, index), never on scheduling.
class SubjectStream {
public:
    SubjectStream(std::uint64_t seed, std::uint64_t index)
        : engine_(splitmix64(splitmix64(seed) ^ (index * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL))) {}

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential() { return -std::log(uniform()); }

private:
    std::mt19937_64 engine_;
};

}  // namespace evscale
