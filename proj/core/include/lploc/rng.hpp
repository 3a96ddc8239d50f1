#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lploc {

// Mixes (seed, stream) into an independent sub-stream seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded generator with explicit, platform-stable transforms. The raw
// mt19937_64 sequence is standardized; uniform/gaussian are derived here
// rather than through std distributions so two runs produce identical bytes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform in (-m, m); m = 0 yields exactly 0.
    double uniform_sym(double m) { return m == 0.0 ? 0.0 : uniform(-m, m); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        return n == 0 ? 0 : engine_() % n;
    }

    // Standard normal via Box-Muller (one draw consumed per call pair).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lploc
