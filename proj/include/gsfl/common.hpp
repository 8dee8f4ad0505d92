#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gsfl {

// Error taxonomy. Each kind maps onto one CLI exit code (see exit_code()).
enum class ErrorKind {
  kUsage,       // bad flags / invalid config values
  kParameter,   // invalid argument to a library operation
  kConfig,      // inconsistent configuration between components
  kShape,       // dimension mismatch
  kState,       // operation called in the wrong state
  kCapability,  // operation not supported by this object
  kFormat,      // malformed file
  kData,        // non-finite or otherwise invalid values
  kIo,          // filesystem failure
  kDivergence,  // training produced a non-finite loss
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

// 0 success, 2 usage, 3 data/format, 4 divergence.
int exit_code(ErrorKind kind) noexcept;

const char* to_string(ErrorKind kind) noexcept;

// Dense row-major matrix of doubles. Deliberately minimal: all arithmetic the
// network needs is written as explicit loops so summation order is fixed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool all_finite(std::span<const double> v) noexcept;
double squared_norm(std::span<const double> v) noexcept;

// Deterministic seed fan-out: every module draws from its own stream labelled
// by a fixed string, so adding randomness in one place never perturbs another.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

// Uniform double in [0, 1) from 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; stateless so the engine alone fixes the stream.
double standard_normal(Rng& rng);

// Unbiased integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;

}  // namespace gsfl
