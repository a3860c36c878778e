#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace corelation {

/// 64-bit Mersenne Twister with platform-independent derived draws.
///
/// std::uniform_*_distribution results differ between standard libraries, so
/// every draw the project depends on goes through the helpers below.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream derived from a root seed and a stream name
    /// ("init", "dropout", "sampling", ...).
    static Rng stream(std::uint64_t seed, std::string_view name);

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace corelation
