#pragma once

#include <cstdint>
#include <random>

namespace mfgraph {

/// Purposes for which independent random streams are split off the master seed.
enum class StreamPurpose : std::uint64_t {
  initial_positions = 1,
  path_noise = 2,
  graph_sampling = 3,
  permutation = 4,
  rearrange_input = 5,
  bootstrap = 6,
  test_data = 7,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Seed for the stream identified by (master, purpose, replica, agent).
///
/// The counters are folded through splitmix64 one at a time, so the stream of a
/// given agent does not depend on how many agents or replicas exist.
inline std::uint64_t stream_seed(std::uint64_t master, StreamPurpose purpose,
                                 std::uint64_t replica = 0, std::uint64_t agent = 0) {
  std::uint64_t h = detail::splitmix64(master);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = detail::splitmix64(h ^ replica);
  h = detail::splitmix64(h ^ agent);
  return h;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, StreamPurpose purpose, std::uint64_t replica = 0,
                          std::uint64_t agent = 0) {
  return Engine(stream_seed(master, purpose, replica, agent));
}

}  // namespace mfgraph
