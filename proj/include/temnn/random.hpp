#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "temnn/geom.hpp"

namespace temnn::rnd {

// Stable seed derivation (FNV-1a plus a finalizer) so every consumer of a
// run seed draws from an independent stream.
inline std::uint64_t derive(std::uint64_t base, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ull ^ base;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

// uniform in [0, 1); identical bits on every platform, unlike
// std::uniform_real_distribution
inline double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit(rng);
}

inline double gaussian(std::mt19937_64& rng) {
    // Box-Muller; rejects the u = 0 corner
    double u1 = unit(rng);
    while (u1 <= 1e-300) u1 = unit(rng);
    double u2 = unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Orthogonal matrix from the QR factorization of a Gaussian matrix
// (Gram-Schmidt with positive projection signs). det is +1 or -1 at random.
inline Mat3 random_orthogonal(std::mt19937_64& rng) {
    Vec3 a{gaussian(rng), gaussian(rng), gaussian(rng)};
    Vec3 b{gaussian(rng), gaussian(rng), gaussian(rng)};
    Vec3 c{gaussian(rng), gaussian(rng), gaussian(rng)};
    Vec3 q1 = normalized(a);
    Vec3 q2 = normalized(b - q1 * dot(q1, b));
    Vec3 q3 = normalized(c - q1 * dot(q1, c) - q2 * dot(q2, c));
    Mat3 q;
    q.set_col(0, q1);
    q.set_col(1, q2);
    q.set_col(2, q3);
    return q;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
    Mat3 q = random_orthogonal(rng);
    if (q.det() < 0.0) q.set_col(2, q.col(2) * -1.0);
    return q;
}

inline Vec3 random_translation(std::mt19937_64& rng, double scale) {
    return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace temnn::rnd
