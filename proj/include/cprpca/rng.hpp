#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cprpca {

using Rng = std::mt19937_64;

// Pipeline stages that draw random numbers. Each (seed, setting, replicate,
// stage) key owns an independent stream, so any stage can be regenerated on
// its own and replicates can run in any order.
enum class Stage : std::uint64_t {
  LowRank = 1,
  Sparse,
  Noise,
  Mechanism,
  Mask,
  Split,
  Bootstrap,
  ObservationFit,
  TestPoints,
  Misc,
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t setting, std::uint64_t replicate,
                    Stage stage) {
  return Rng(stream_key({seed, setting, replicate, static_cast<std::uint64_t>(stage)}));
}

// Child stream derived from a parent generator's next output and a label.
inline Rng fork_rng(Rng& parent, std::uint64_t label) {
  return Rng(stream_key({parent(), label}));
}

}  // namespace cprpca
