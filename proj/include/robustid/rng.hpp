#pragma once

#include <cstdint>
#include <random>

namespace robustid {

/// Independent random sub-streams derived from one master seed.
enum class Stream : std::uint64_t {
    schedule = 1,
    inputs = 2,
    directions = 3,
    lengths = 4,
    system = 5,
    trial = 6,
    refinement = 7,
};

/// SplitMix64 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t z);

/// Seed for sub-stream `stream` (and optional counter) of `master`. Streams do
/// not share state, so consuming more draws from one leaves the others intact.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t counter = 0);

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, Stream stream, std::uint64_t counter = 0) {
    return Engine(derive_seed(master, stream, counter));
}

}  // namespace robustid
