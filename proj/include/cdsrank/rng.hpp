#ifndef CDSRANK_RNG_HPP
#define CDSRANK_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace cdsrank {

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard, but the std distributions are not, so the draws here are
// implemented by hand to keep outputs bit-identical across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1), 53-bit mantissa.
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; never zero, safe as a log argument.
    double uniform_pos() { return (static_cast<double>(bits() >> 11) + 1.0) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t x;
        do {
            x = bits();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; the second value is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Partial Fisher-Yates: permutes the first `take` slots of [0, n).
    template <typename Vec>
    void partial_shuffle(Vec& v, std::size_t take) {
        const std::size_t n = v.size();
        for (std::size_t i = 0; i < take && i + 1 < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cdsrank

#endif
