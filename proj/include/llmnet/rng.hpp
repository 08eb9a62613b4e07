#pragma once

#include <cstdint>
#include <initializer_list>

namespace llmnet {

// Counter-based random streams. Every draw is a pure function of
// (seed, counters...), so the order in which trials, agents or rounds are
// processed never changes the sampled values.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = splitmix64(seed);
    for (auto c : counters)
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    return to_unit(derive_seed(seed, counters));
}

// Stream tags keep independent uses of one master seed apart.
enum class StreamTag : std::uint64_t {
    network = 1,
    initial_states = 2,
    activation = 3,
    transition = 4,
    grading = 5,
    readjust = 6,
    rewire = 7,
    spsa = 8,
    trial = 9,
    scenario = 10,
    episode = 11,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

} // namespace llmnet
