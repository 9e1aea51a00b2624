#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace disco {

// Seedable, splittable generator with a fully documented algorithm so that
// datasets are bit-reproducible across implementations:
//
//   state update:  splitmix64 (Steele et al., "Fast splittable PRNGs")
//   uniform01:     top 53 bits of next_u64, scaled by 2^-53  -> [0, 1)
//   normal:        Box-Muller on two uniform01 draws (cached spare)
//   uniform_int:   modulo rejection on next_u64 (unbiased)
//   split(tag):    child seeded with next_u64() xor fnv1a64(tag)
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // uniform in [0, bound)
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % bound;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Fisher-Yates; returns a permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(idx[i - 1], idx[j]);
        }
        return idx;
    }

    // First m entries of a random permutation, ascending. Fixed reduction
    // order downstream relies on the sort.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m);

    SplitRng split(std::string_view tag) {
        return SplitRng(next_u64() ^ fnv1a64(tag));
    }

    static std::uint64_t fnv1a64(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const char c : s) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::vector<std::size_t> SplitRng::sample_without_replacement(std::size_t n,
                                                                     std::size_t m) {
    auto idx = permutation(n);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace disco
