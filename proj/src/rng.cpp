#include "robustid/rng.hpp"

namespace robustid {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t counter) {
    const auto tag = static_cast<std::uint64_t>(stream);
    return mix64(mix64(master ^ mix64(tag)) + mix64(counter * 0xd1b54a32d192ed03ULL + tag));
}

}  // namespace robustid
