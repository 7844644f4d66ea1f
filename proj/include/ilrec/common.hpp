#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilrec {

using Vec = std::vector<double>;

// Error taxonomy; the CLI maps these to exit codes.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ProviderError : std::runtime_error {
    explicit ProviderError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic per-stream seed derivation.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x51ed270b1a2f9d3dULL));
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, const std::string& stream) {
    return derive_seed(base, fnv1a(stream));
}

inline double u01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double gauss(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw UsageError("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) {
    return std::sqrt(dot(a, a));
}

inline Vec normalized(Vec a) {
    double n = norm2(a);
    if (n < 1e-12) throw NumericError("normalized: zero-length vector");
    for (double& x : a) x /= n;
    return a;
}

inline double cosine(const Vec& a, const Vec& b) {
    double na = norm2(a), nb = norm2(b);
    if (na < 1e-12 || nb < 1e-12) throw UsageError("cosine: zero vector");
    return dot(a, b) / (na * nb);
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    double z = std::exp(x);
    return z / (1.0 + z);
}

inline double clamp(double x, double lo, double hi) {
    return std::min(hi, std::max(lo, x));
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace ilrec
