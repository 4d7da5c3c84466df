#ifndef LAPLAB_RANDOM_HPP
#define LAPLAB_RANDOM_HPP

#include <cstdint>
#include <random>

namespace laplab {

// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a) { return mix64(mix64(seed) ^ mix64(a + 0x632be59bd9b4e019ULL)); }
constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) { return sub_seed(sub_seed(seed, a), b); }

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    bool coin() { return (engine_() >> 63) != 0; }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace laplab

#endif  // LAPLAB_RANDOM_HPP
