#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pad {

// splitmix64 finalizer; the basis of every random draw in the project.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: output i depends only on (key, i), never on how
// many values other streams consumed. Substreams are derived by hashing a
// name plus up to two integer qualifiers into the key.
class Rng {
 public:
  explicit Rng(uint64_t key) : key_(key) {}

  static Rng substream(uint64_t seed, std::string_view name, uint64_t a = 0, uint64_t b = 0) {
    uint64_t k = mix64(seed ^ hash_str(name));
    k = mix64(k ^ mix64(a ^ 0x9e3779b97f4a7c15ULL));
    k = mix64(k ^ mix64(b ^ 0x6a09e667f3bcc909ULL));
    return Rng(k);
  }

  uint64_t next_u64() { return mix64(mix64(counter_++) ^ key_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal; consumes exactly two draws, no cached second value
  double gaussian() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // unbiased integer in [0, n)
  uint64_t below(uint64_t n) {
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), partial Fisher-Yates, order of selection
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      size_t j = static_cast<size_t>(i) + static_cast<size_t>(below(static_cast<uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[j]);
      out.push_back(pool[static_cast<size_t>(i)]);
    }
    return out;
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace pad
