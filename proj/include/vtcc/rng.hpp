#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>

namespace vtcc {

// Seeded 64-bit generator with platform-independent derived distributions.
// Identical seed and draw position always reproduce the same sequence.
class SeededRng {
   public:
    static constexpr const char* kAlgorithm = "mt19937_64";

    explicit SeededRng(uint64_t seed) : engine_(seed), seed_(seed) {}

    // Independent sub-stream seed from a base seed and a list of tags
    // (e.g. epoch, sample index, view).
    static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> tags);

    uint64_t next_u64() {
        ++position_;
        return engine_();
    }
    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [lo, hi].
    int64_t uniform_int(int64_t lo, int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }
    double normal();
    // Normal(0, stddev) resampled until |x| <= bound·stddev.
    double truncated_normal(double stddev, double bound = 2.0);

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<int64_t>(last - first);
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = uniform_int(0, i);
            using std::swap;
            swap(first[i], first[j]);
        }
    }

    uint64_t seed() const { return seed_; }
    uint64_t position() const { return position_; }

   private:
    std::mt19937_64 engine_;
    uint64_t seed_;
    uint64_t position_ = 0;
};

}  // namespace vtcc
