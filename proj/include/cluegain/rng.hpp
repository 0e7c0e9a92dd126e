#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cluegain {

// splitmix64; used to spread one master seed into independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt_a,
                                 std::uint64_t salt_b = 0) {
    return mix_seed(mix_seed(master ^ mix_seed(salt_a)) ^ mix_seed(salt_b));
}

// One deterministic pseudo-random stream. Draw helpers are hand-rolled on
// top of mt19937_64 so sequences do not depend on the standard library's
// distribution implementations.
class RngStream {
public:
    RngStream() : engine_(0) {}
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; one spare value cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// The named streams one training run consumes. Each is derived from the
// master seed with its own salt, so reordering draws in one stream never
// perturbs another.
struct RngStreams {
    RngStream mask;
    RngStream noise;
    RngStream hint;
    RngStream init;
    RngStream batch;

    static RngStreams from_seed(std::uint64_t master) {
        RngStreams s;
        s.mask = RngStream(derive_seed(master, 1));
        s.noise = RngStream(derive_seed(master, 2));
        s.hint = RngStream(derive_seed(master, 3));
        s.init = RngStream(derive_seed(master, 4));
        s.batch = RngStream(derive_seed(master, 5));
        return s;
    }

    // Disjoint stream family for trial t of a multi-trial experiment.
    static RngStreams for_trial(std::uint64_t master, std::uint64_t trial) {
        return from_seed(derive_seed(master, 0x7452494cull, trial + 1));
    }
};

}  // namespace cluegain
