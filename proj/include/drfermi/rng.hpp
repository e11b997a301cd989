#pragma once

#include <cstdint>
#include <vector>

namespace drfermi {

/// Counter-based generator: draw i of stream `seed` is a SplitMix64 hash of
/// (seed, i). Bit-identical on every platform, unlike the std:: distributions.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound) noexcept;

    /// Standard normal via Box-Muller (deterministic, no cached spare).
    double normal() noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

/// `count` distinct indices drawn uniformly from [0, n), in draw order.
std::vector<long> sample_without_replacement(long n, long count, CounterRng& rng);

}  // namespace drfermi
