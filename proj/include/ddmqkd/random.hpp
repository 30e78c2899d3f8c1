#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ddmqkd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for (seed, tag...) so that trials, detectors and
// noise draws never share an RNG sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept
{
    std::uint64_t h = splitmix64(seed);
    for (auto t : tags)
        h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {})
{
    return Rng(derive_seed(seed, tags));
}

} // namespace ddmqkd
