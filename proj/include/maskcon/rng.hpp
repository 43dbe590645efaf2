#pragma once

#include <cstdint>
#include <vector>

namespace maskcon {

// xoshiro256** with splitmix64 seeding. Distribution algorithms are pinned
// here (Box-Muller normals, rejection-sampled integers) so a run is
// reproducible independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0,1), 53-bit
  double uniform(double lo, double hi);
  double normal();                        // standard normal
  std::size_t uniform_index(std::size_t n);  // [0,n), n >= 1

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable derivation of per-stream seeds from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace maskcon
