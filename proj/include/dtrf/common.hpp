// Shared error types, token aliases, and the deterministic RNG used
// everywhere randomness is needed.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtrf {

// Invalid configuration supplied by the caller (sizes, fractions, flags).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input data (files, token ids, records).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; message names both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem / serialization failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken internal invariant; indicates a bug, not bad input.
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using TokenSeq = std::vector<int>;

// Deterministic random source. mt19937_64 is bit-exact across standard
// libraries, but the std distributions are not, so every draw is derived
// from raw engine output by hand. Identical seeds give identical streams
// on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) {
            throw InternalError("SeededRng::next_below: n must be positive");
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % n;
    }

    // Box-Muller with a cached spare.
    double next_normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        const double u = 1.0 - next_double();  // (0, 1], keeps log finite
        const double theta = 2.0 * 3.14159265358979323846 * next_double();
        const double r = std::sqrt(-2.0 * std::log(u));
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dtrf
