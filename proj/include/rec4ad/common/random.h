#ifndef REC4AD_COMMON_RANDOM_H_
#define REC4AD_COMMON_RANDOM_H_

#include <cstdint>
#include <random>

namespace rec4ad {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds so that
// per-session / per-record streams do not depend on iteration order.
inline std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return MixSeed(MixSeed(seed) ^ MixSeed(stream + 0x5851f42d4c957f2dULL));
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream,
                                std::uint64_t index) {
  return DeriveSeed(DeriveSeed(seed, stream), index);
}

// Uniform double in [0, 1) from the top 53 bits; avoids the
// implementation-defined behaviour of std::uniform_real_distribution.
inline double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace rec4ad

#endif  // REC4AD_COMMON_RANDOM_H_
