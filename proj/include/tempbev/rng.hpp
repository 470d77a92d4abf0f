#pragma once

#include <cstdint>
#include <random>

#include "tempbev/tensor.hpp"

namespace tempbev {

// All stochastic code goes through this wrapper so seeding stays explicit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(eng_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(eng_);
    }
    double normal(double mean, double std) {
        return std::normal_distribution<double>(mean, std)(eng_);
    }
    // rejection-sampled truncated normal
    double truncated_normal(double mean, double std, double lo, double hi) {
        for (;;) {
            const double v = normal(mean, std);
            if (v >= lo && v <= hi) return v;
        }
    }
    std::uint64_t next_u64() { return eng_(); }
    std::mt19937_64& engine() { return eng_; }

    // independent substream, for decoupling e.g. world geometry from noise
    Rng fork(std::uint64_t salt) {
        return Rng(eng_() ^ (0x9e3779b97f4a7c15ull * (salt + 1)));
    }

private:
    std::mt19937_64 eng_;
};

inline Tensor truncated_normal_tensor(std::vector<int> shape, double mean, double std,
                                      double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = rng.truncated_normal(mean, std, lo, hi);
    return t;
}

}  // namespace tempbev
