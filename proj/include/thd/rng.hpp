#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace thd {

// Deterministic splittable generator built on splitmix64. fork(stream) derives
// an independent stream from the construction seed, so forked sequences do not
// depend on how many values the parent has already drawn. Identical seeds give
// identical sequences on every platform and thread count.
class Rng {
 public:
  explicit Rng(uint64_t seed) : root_(seed), state_(mix(seed + kGolden)) {}

  uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return n <= 1 ? 0 : static_cast<int>(uniform() * static_cast<double>(n));
  }

  // standard normal via Box-Muller; the second value of each pair is cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream keyed on (construction seed, stream id).
  Rng fork(uint64_t stream) const { return Rng(mix(root_ ^ mix(stream + kGolden))); }
  Rng fork(uint64_t a, uint64_t b) const { return fork(mix(a + kGolden) ^ b); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // n distinct indices from [0, pool) when pool >= n, else n draws with
  // replacement. Order is the sampling order, not sorted.
  std::vector<int> sample_indices(int pool, int n) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    if (pool >= n) {
      std::vector<int> idx(static_cast<size_t>(pool));
      for (int i = 0; i < pool; ++i) idx[static_cast<size_t>(i)] = i;
      for (int i = 0; i < n; ++i) {
        int j = i + uniform_int(pool - i);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        out.push_back(idx[static_cast<size_t>(i)]);
      }
    } else {
      for (int i = 0; i < n; ++i) out.push_back(uniform_int(pool));
    }
    return out;
  }

  uint64_t seed() const { return root_; }

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  uint64_t root_;
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace thd
