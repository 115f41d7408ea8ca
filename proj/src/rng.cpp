#include "polarsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace polarsim {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::derive(std::uint64_t stream) const {
    // Mix the stream index through splitmix so adjacent indices decorrelate.
    std::uint64_t x = stream ^ 0xd2b74407b1ce6e93ULL;
    return Rng(seed_ ^ splitmix64(x));
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::int64_t Rng::poisson(double mean) {
    if (!(mean >= 0.0)) throw std::domain_error("poisson: mean must be >= 0");
    if (mean == 0.0) return 0;
    if (mean < 50.0) {
        // Inversion by sequential search on the pmf.
        const double u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        std::int64_t k = 0;
        while (u > cdf && k < 2000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    const double v = mean + std::sqrt(mean) * normal();
    return v <= 0.0 ? 0 : static_cast<std::int64_t>(std::llround(v));
}

std::int64_t Rng::binomial(std::int64_t n, double p) {
    if (n < 0 || !(p >= 0.0) || !(p <= 1.0))
        throw std::domain_error("binomial: need n >= 0 and p in [0,1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    const double np = static_cast<double>(n) * p;
    if (np < 30.0) {
        if (p < 1e-4) return std::min<std::int64_t>(n, poisson(np));
        // Exact CDF inversion; the walk stays near np so the loop is short.
        const double u = uniform();
        const double q = 1.0 - p;
        const double r = p / q;
        double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
        double cdf = pmf;
        std::int64_t k = 0;
        while (u > cdf && k < n) {
            pmf *= r * static_cast<double>(n - k) / static_cast<double>(k + 1);
            cdf += pmf;
            ++k;
            if (k > static_cast<std::int64_t>(np + 40.0 * std::sqrt(np) + 50.0)) break;
        }
        return k;
    }
    const double sigma = std::sqrt(np * (1.0 - p));
    const double v = np + sigma * normal();
    if (v <= 0.0) return 0;
    const auto k = static_cast<std::int64_t>(std::llround(v));
    return k > n ? n : k;
}

}  // namespace polarsim
