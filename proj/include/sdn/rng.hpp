#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sdn {

/// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives a child seed from a root seed and a path of stream identifiers.
/// derive_seed(s, {a, b}) is a pure function, so any work item can reconstruct
/// its own stream without consuming from a shared generator.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = mix64(root);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ull));
    return s;
}

/// Stream identifiers for derive_seed.
enum class Stream : std::uint64_t {
    init = 1,
    shuffle,
    subsample,
    jitter,
    pose,
    template_samples,
    dataset,
};

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t a = 0,
                                 std::uint64_t b = 0)
{
    return derive_seed(root, {static_cast<std::uint64_t>(stream), a, b});
}

/// mt19937_64 with portable conversions to floating point (the std
/// distributions are implementation-defined, these are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        // Lemire's rejection keeps this unbiased.
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = m_engine();
            if (r >= threshold) return r % n;
        }
    }

    template <typename It>
    void shuffle(It first, It last)
    {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) std::iter_swap(first + (i - 1), first + below(i));
    }

private:
    std::mt19937_64 m_engine;
};

} // namespace sdn
