#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace advtrain {

/// Mixes a base seed with a stream label into an independent seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Seeded generator with distribution code that does not depend on the
/// standard library implementation, so streams are reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::size_t below(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace advtrain
