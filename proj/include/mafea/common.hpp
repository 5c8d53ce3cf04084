#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mafea {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Bad configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Broken or inconsistent on-disk data (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// NaN/Inf escaped a numeric kernel (CLI exit code 4). Never silent.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline Index shape_numel(const Shape& shape) {
    Index n = 1;
    for (Index e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape);

/// Deterministic random source. All initialization, data generation and
/// shuffling draws flow through one of these so a seed pins every bit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }
    Index uniform_int(Index lo, Index hi) {  // inclusive bounds
        std::uniform_int_distribution<Index> d(lo, hi);
        return d(gen_);
    }
    std::uint64_t next() { return gen_(); }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

}  // namespace mafea
