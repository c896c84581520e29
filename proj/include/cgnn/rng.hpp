#pragma once

#include <cstdint>
#include <random>

namespace cgnn {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive decorrelated seeds from (seed, stream) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix_seed(seed, stream));
}

/// Named substreams so unrelated consumers of one run seed never share draws.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kAugment = 4;
inline constexpr std::uint64_t kSynthEdges = 5;
inline constexpr std::uint64_t kSynthAttrs = 6;
}  // namespace stream

}  // namespace cgnn
