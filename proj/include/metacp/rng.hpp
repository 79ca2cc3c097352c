#pragma once

#include <cstdint>
#include <random>

namespace metacp {

using Rng = std::mt19937_64;

// Independent random substreams derived from a single 64-bit root seed.
// The numeric tags are part of the on-disk reproducibility contract and must
// not be renumbered.
enum class Stream : std::uint64_t {
  TaskSampling = 0x7461736b,  // "task"
  EnvDynamics = 0x656e7664,   // "envd"
  Policy = 0x706f6c69,        // "poli"
  Init = 0x696e6974,          // "init"
  Minibatch = 0x6d696e69,     // "mini"
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// seed = splitmix64(splitmix64(root ^ splitmix64(tag)) + index)
constexpr std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                    std::uint64_t index = 0) {
  const auto tag = static_cast<std::uint64_t>(stream);
  return splitmix64(splitmix64(root ^ splitmix64(tag)) + index);
}

inline Rng make_rng(std::uint64_t root, Stream stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace metacp
