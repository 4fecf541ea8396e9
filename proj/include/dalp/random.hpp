#pragma once

#include <cstdint>
#include <random>

namespace dalp {

using Rng = std::mt19937_64;

/// Seed for an independent stream derived from a master seed; the same
/// (master, stream, substream) triple always yields the same seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0) {
    return Rng(derive_seed(master, stream, substream));
}

}  // namespace dalp
