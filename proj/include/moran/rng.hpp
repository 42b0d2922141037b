#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace moran {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One independent stream per (seed, stream index). Replicate k always gets the
// same stream regardless of which worker runs it.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream)
        : engine_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

    // uniform on [0,1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform on (0,1]
    double uniform_pos() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    int below(int n) {
        int k = static_cast<int>(uniform() * n);
        return k < n ? k : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename Weights>
    int categorical(const Weights& w, double total) {
        double x = uniform() * total;
        int last = -1;
        for (int k = 0; k < static_cast<int>(w.size()); ++k) {
            if (w[k] <= 0) continue;
            last = k;
            x -= w[k];
            if (x < 0) return k;
        }
        return last;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace moran
