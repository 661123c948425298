#pragma once

#include <cstdint>
#include <random>

namespace drau {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed of stream `stream` under base seed `base`; different streams of one
/// base never share a generator.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline Rng make_rng(std::uint64_t base, std::uint64_t stream) { return Rng(derive_seed(base, stream)); }

}  // namespace drau
