#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pblab {

// splitmix64 finalizer. Used both as the generator step and for seed mixing.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based PRNG (splitmix64). The generator is part of the artifact's
// contract: config files carry the algorithm name so reimplementations can
// reproduce byte-identical runs.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t next_u64() { return mix64(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    // Child stream keyed by purpose id. Independent of how much of this
    // stream has been consumed.
    CounterRng derive(std::uint64_t stream) const {
        return CounterRng(mix64(seed_ ^ mix64(stream ^ 0xD2B74407B1CE6E93ULL)));
    }

    // [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; consumes two words per call.
    double gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n) via 128-bit multiply-shift.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("CounterRng::below: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn from [0, n), in draw order.
    std::vector<std::uint32_t> sample_indices(std::uint32_t n, std::uint32_t k) {
        if (k > n) throw std::invalid_argument("CounterRng::sample_indices: k > n");
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        for (std::uint32_t i = 0; i < k; ++i) {
            std::uint32_t j = i + static_cast<std::uint32_t>(below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

// Fixed purpose ids for deriving sub-streams from a run seed.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kPretrain = 2;
inline constexpr std::uint64_t kTargets = 3;
inline constexpr std::uint64_t kSplit = 4;
inline constexpr std::uint64_t kPoison = 5;
inline constexpr std::uint64_t kVictim = 6;
inline constexpr std::uint64_t kShadow = 7;
inline constexpr std::uint64_t kCoins = 8;
inline constexpr std::uint64_t kCanary = 9;
inline constexpr std::uint64_t kCalibration = 10;
inline constexpr std::uint64_t kProbe = 11;
inline constexpr std::uint64_t kInit = 12;
inline constexpr std::uint64_t kNeftune = 13;
inline constexpr std::uint64_t kHeldout = 14;
}  // namespace streams

}  // namespace pblab
