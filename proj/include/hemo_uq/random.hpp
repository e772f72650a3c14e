#pragma once

#include <cstdint>
#include <random>

namespace hemo_uq {

/// SplitMix64 finaliser, used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Reproducible random stream identified by (master seed, stream id).
 *
 * Every sample / task gets its own stream, so results never depend on
 * evaluation order or on how work is split across threads.
 */
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream) {
        const std::uint64_t a = mix64(seed);
        const std::uint64_t b = mix64(a ^ mix64(stream + 0x632be59bd9b4e019ULL));
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        engine_.seed(seq);
    }

    /// Uniform draw on the open interval (0, 1) with 53 random bits.
    double uniform() {
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace hemo_uq
