#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fedpgp/errors.hpp"

namespace fedpgp {

// SplitMix64, used only to spread seeds into PCG32 initialization values
// and to derive independent per-component streams from one master seed.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// Derive a child seed from (master, salt). Distinct salts give
// statistically independent streams.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t salt) {
    SplitMix64 s(master ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
    return s.next();
}

// PCG32 seeded via SplitMix64; Gaussian draws via Box-Muller.
// Identical seed -> identical draw sequence on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        SplitMix64 sm(seed);
        const std::uint64_t initstate = sm.next();
        const std::uint64_t initseq = sm.next();
        inc_ = (initseq << 1u) | 1u;
        state_ = 0;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in [0, 1).
    double uniform() { return next_u32() * 0x1p-32; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_open() { return (static_cast<double>(next_u32()) + 1.0) * 0x1p-32; }

    // Unbiased integer in [0, bound) by rejection.
    std::uint32_t below(std::uint32_t bound) {
        if (bound == 0) throw InvalidParameter("rng: below(0)");
        const std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Fisher-Yates, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = below(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedpgp
