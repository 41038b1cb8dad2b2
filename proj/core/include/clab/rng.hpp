#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace clab {

/// splitmix64 finalizer; derives independent stream seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// mt19937_64 with fixed value mappings. The standard pins the engine's
/// output sequence but not the distributions', so the mappings live here
/// to keep every run reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  std::uint64_t uniform_index(std::uint64_t n);  // unbiased draw from [0, n)
  int uniform_int(int lo, int hi);           // inclusive bounds
  double normal();                           // standard normal, Box-Muller
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state_str() const;
  void set_state_str(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace clab
