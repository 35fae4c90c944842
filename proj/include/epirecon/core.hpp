#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace epirecon {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

/// Raised when an iterate stops being finite. Carries where it happened.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::uint64_t iteration, std::string variable)
      : std::runtime_error("non-finite value in '" + variable + "' at iteration " +
                           std::to_string(iteration)),
        iteration_(iteration),
        variable_(std::move(variable)) {}

  std::uint64_t iteration() const noexcept { return iteration_; }
  const std::string& variable() const noexcept { return variable_; }

 private:
  std::uint64_t iteration_;
  std::string variable_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require_same_size(Index expected, Index actual, const char* what) {
  if (expected != actual) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                std::to_string(expected) + ", got " + std::to_string(actual) +
                                ")");
  }
}

// The std distributions are implementation-defined, so seeded streams are
// built directly on mt19937_64 (whose output sequence is fixed by the standard).
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) without modulo bias.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

/// Standard normal via the Marsaglia polar method.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double a, b, s;
    do {
      a = 2.0 * uniform_unit(rng) - 1.0;
      b = 2.0 * uniform_unit(rng) - 1.0;
      s = a * a + b * b;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = b * scale;
    has_spare_ = true;
    return a * scale;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace epirecon
