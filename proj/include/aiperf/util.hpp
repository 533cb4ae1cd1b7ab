#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace aiperf {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

// Small deterministic generator (splitmix64). Used everywhere a seeded
// stream is needed so results are identical across platforms; never use
// std:: distributions for anything that must reproduce.
struct SplitMix64 {
  u64 state;
  explicit SplitMix64(u64 seed) : state(seed) {}

  u64 next() {
    u64 z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  u64 below(u64 n) { return n == 0 ? 0 : next() % n; }

  // uniform in [0, 1)
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline u64 mix64(u64 a, u64 b) {
  SplitMix64 rng(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
  return rng.next();
}

inline u64 mix64(u64 a, u64 b, u64 c) { return mix64(mix64(a, b), c); }
inline u64 mix64(u64 a, u64 b, u64 c, u64 d) { return mix64(mix64(a, b, c), d); }

inline u64 fnv1a64(std::string_view s) {
  u64 h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string u128_to_string(u128 v) {
  if (v == 0) return "0";
  char buf[64];
  int pos = 64;
  while (v > 0) {
    buf[--pos] = static_cast<char>('0' + static_cast<int>(v % 10));
    v /= 10;
  }
  return std::string(buf + pos, buf + 64);
}

inline double u128_to_double(u128 v) { return static_cast<double>(v); }

}  // namespace aiperf
