#pragma once

#include <cstdint>
#include <random>

namespace rpo
{

    using Rng = std::mt19937_64;

    /// SplitMix64 finalizer; decorrelates nearby seeds.
    inline std::uint64_t mix64(std::uint64_t x)
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Seed of an independent stream addressed by (seed, a, b), e.g. (run seed, sample, node).
    inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
    {
        return mix64(mix64(mix64(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
    }

    inline Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
    {
        return Rng(stream_seed(seed, a, b));
    }

    inline double uniform01(Rng &rng)
    {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }

    inline double normal01(Rng &rng)
    {
        return std::normal_distribution<double>(0.0, 1.0)(rng);
    }

} // namespace rpo
