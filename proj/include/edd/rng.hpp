#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace edd {

// Deterministic splittable PRNG (splitmix64 core). Every stochastic
// operation in the library takes one of these explicitly; independent
// streams are derived with split() so reordering unrelated work never
// perturbs results.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                            // [0, 1)
  double uniform(double lo, double hi);        // [lo, hi)
  double normal();                             // standard normal, Box-Muller
  double truncated_normal(double limit);       // redraw outside +-limit
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n), unbiased

  // Derive an independent child stream. Children are a pure function of the
  // stream this generator was constructed as, the tag, and the index — draws
  // taken from the parent before splitting do not change them.
  Rng split(std::string_view tag, std::uint64_t index = 0) const;

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t stream_;  // fixed identity assigned at construction
  std::uint64_t state_;   // advances with every draw
};

}  // namespace edd
