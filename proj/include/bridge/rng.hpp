#pragma once

#include <cstdint>
#include <random>

namespace bridge {

// All sampling goes through this wrapper so results are identical across
// platforms (std::shuffle / std::uniform_int_distribution are not portable).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, n). Modulo bias is irrelevant at the scales used here.
    size_t uniform(size_t n) { return n ? static_cast<size_t>(gen_() % n) : 0; }

    double uniform01() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double gaussian() {
        // Box-Muller on the portable uniform stream.
        double u1 = uniform01(), u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace bridge
