#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace scrawl {

// mt19937_64 with hand-rolled value conversions so streams are identical
// across standard libraries (std::*_distribution is not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; no spare caching so the stream is position-independent
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return eng_() % n; }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // derive an independent stream, e.g. per epoch or per batch
    Rng fork(uint64_t salt) { return Rng(eng_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545F4914F6CDD1DULL)); }

private:
    std::mt19937_64 eng_;
};

}  // namespace scrawl
