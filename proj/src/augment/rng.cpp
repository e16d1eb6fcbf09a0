#include "vtcc/rng.hpp"

#include <cmath>
#include <numbers>

namespace vtcc {
namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t SeededRng::derive(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t h = splitmix64(seed);
    for (uint64_t tag : tags) h = splitmix64(h ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
    return h;
}

int64_t SeededRng::uniform_int(int64_t lo, int64_t hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());
    const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return lo + static_cast<int64_t>(draw % range);
}

double SeededRng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::truncated_normal(double stddev, double bound) {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= bound) return z * stddev;
    }
}

}  // namespace vtcc
