#pragma once

#include <cmath>
#include <cstdint>

namespace sdfc {

/* Deterministic, bit-portable randomness. std::normal_distribution is not
 * reproducible across standard libraries and a stateful engine cannot give
 * per-(sample,layer,step,unit) noise that is independent of evaluation
 * order, so both the stream generator and the counter-keyed variant are
 * built on the splitmix64 mixer. */

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/* 53-bit mantissa draw in the open interval (0,1); never returns 0, so it is
 * safe inside log(). */
inline double bits_to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

/* Sequential stream: splitmix64 over a Weyl sequence. */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return splitmix64(state_ += 0x9e3779b97f4a7c15ull); }

    double uniform() { return bits_to_unit(next()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    /* Fisher-Yates index for shuffles: unbiased via rejection. */
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t lim = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= lim);
        return v % n;
    }

  private:
    std::uint64_t state_;
};

/* Counter-keyed gaussian: a pure function of (seed, sample, layer, step,
 * unit), so every batch-evaluation order sees the same noise realization. */
inline std::uint64_t mix_key(std::uint64_t h, std::uint64_t w) {
    return splitmix64(h ^ (w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

inline double keyed_gaussian(std::uint64_t seed, std::uint64_t sample, std::uint64_t layer,
                             std::uint64_t step, std::uint64_t unit) {
    std::uint64_t h = splitmix64(seed);
    h = mix_key(h, sample);
    h = mix_key(h, layer);
    h = mix_key(h, step);
    h = mix_key(h, unit);
    const double u1 = bits_to_unit(splitmix64(h ^ 0xa0761d6478bd642full));
    const double u2 = bits_to_unit(splitmix64(h ^ 0xe7037ed1a0b428dbull));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace sdfc
