#ifndef THINDYN_RNG_HPP
#define THINDYN_RNG_HPP

#include <cstdint>

namespace thindyn {

// splitmix64: small deterministic generator for probe fields and noise.
// All randomized estimators take an explicit seed so reports are reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [a,b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // symmetric uniform in [-w,w)
    double symmetric(double w) { return uniform(-w, w); }

private:
    std::uint64_t state_;
};

} // namespace thindyn

#endif
