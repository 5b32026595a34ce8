#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crossdiff {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Observation window length consumed by the model: 15 frames, with the
// crossing label describing the frame after the window.
inline constexpr int kWindow = 15;
inline constexpr int kRawDim = 7;  // bbox(4) + center(2) + ego speed(1)

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: argument/parse/validation/config -> 2, io -> 3, numerical -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct VersionError : Error {
    using Error::Error;
};
struct MetricError : Error {
    using Error::Error;
};

// FNV-1a, used wherever a stable per-record seed is derived from an id.
// std::hash is implementation-defined, this is not.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the xor; cheap and well distributed
    std::uint64_t z = (a ^ (b + 0x9e3779b97f4a7c15ULL)) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Mat randn(int rows, int cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = dist(rng);
    return m;
}

inline bool all_finite(const Mat& m) {
    return m.allFinite();
}

}  // namespace crossdiff
