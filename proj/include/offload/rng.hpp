#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace offload {

/// splitmix64 finalizer; used to derive independent seeds for named streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream * 0xd1b54a32d192ed03ULL + 1));
}

// Stream ids. Each consumer of randomness owns one so that enabling a feature
// never shifts another component's draws.
namespace streams {
inline constexpr std::uint64_t servers = 1;
inline constexpr std::uint64_t environment = 2;
inline constexpr std::uint64_t lacs = 3;
inline constexpr std::uint64_t policy = 4;
inline constexpr std::uint64_t baseline = 5;
inline constexpr std::uint64_t perturbation = 6;
inline constexpr std::uint64_t episodes = 7;
inline constexpr std::uint64_t dataset = 8;
inline constexpr std::uint64_t calibration = 9;
}  // namespace streams

/// Seeded 64-bit generator with distribution helpers that are bit-stable
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(derive_seed(seed, stream_id));
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) return 0;
        // Rejection keeps the draw unbiased.
        const std::uint64_t limit = (~std::uint64_t{0} - n + 1) % n;
        std::uint64_t x = engine_();
        while (x < limit) x = engine_();
        return x % n;
    }

    /// Unit-mean exponential.
    double exponential() { return -std::log1p(-uniform()); }

    /// Draws an index from an (already normalized) probability vector.
    template <typename Probs>
    int categorical(const Probs& probs) {
        const double u = uniform();
        double acc = 0.0;
        int last = 0;
        for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last = i;
            if (u < acc) return i;
        }
        return last;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace offload
