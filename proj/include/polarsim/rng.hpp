#pragma once
// Self-contained deterministic RNG (xoshiro256++) with derived sub-streams
// and the count samplers the Monte Carlo mode needs. Keeping the generator
// and samplers in-repo pins output sequences across platforms and library
// versions, which the reproducibility contract requires.

#include <array>
#include <cstdint>

namespace polarsim {

class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    // Independent stream keyed by (seed, stream). Derived streams do not
    // share state with the parent.
    Rng derive(std::uint64_t stream) const;

    std::uint64_t next_u64();

    // Uniform double in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller.
    double normal();

    // Poisson(mean); inversion for small means, normal approximation for
    // large ones (relative moment error < 1e-3 where it engages).
    std::int64_t poisson(double mean);

    // Binomial(n, p); exact CDF inversion when n*p is small, otherwise
    // Poisson / normal approximations. All call sites have p << 1.
    std::int64_t binomial(std::int64_t n, double p);

  private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
};

}  // namespace polarsim
