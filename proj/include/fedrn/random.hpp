#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedrn {

using Rng = std::mt19937_64;

/// Purposes for which independent random streams are derived from a seed.
enum class Stream : std::uint64_t {
  kData = 1,
  kPartition,
  kNoise,
  kProbe,
  kInit,
  kSampling,
  kLocalTrain,
  kFineTune,
  kRandomNeighbors,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hashes a root seed and a path of keys into a stream identifier. Distinct
/// paths give statistically independent streams; identical paths give the
/// same stream.
inline std::uint64_t derive_stream(std::uint64_t root,
                                   std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(root);
  for (std::uint64_t key : path) h = splitmix64(h ^ splitmix64(key + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t derive_stream(std::uint64_t root, Stream tag,
                                   std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = derive_stream(root, {static_cast<std::uint64_t>(tag)});
  for (std::uint64_t key : path) h = splitmix64(h ^ splitmix64(key + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t stream) { return Rng(stream); }

}  // namespace fedrn
