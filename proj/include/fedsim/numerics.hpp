#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

/// Raised when an operation produces NaN or Inf. The simulator aborts the run
/// instead of letting non-finite values leak through adaptive denominators.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat dense parameter vector. Holds model weights, momenta, second-order
/// momenta and the global offset alike. The dimension is fixed at construction.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  static ParamVector zeros(std::size_t dim) { return ParamVector(dim, 0.0); }
  static ParamVector ones(std::size_t dim) { return ParamVector(dim, 1.0); }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

/// Throws NonFiniteError naming `what` if any entry is NaN or Inf.
void require_finite(const ParamVector& x, const std::string& what);
void require_same_dim(const ParamVector& x, const ParamVector& y, const char* op);

// a*x + y
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
ParamVector hadamard(const ParamVector& x, const ParamVector& y);
ParamVector elementwise_max(const ParamVector& x, const ParamVector& y);
/// Elementwise 1/sqrt(x). Every entry must be strictly positive; a zero or
/// negative entry means the second-moment floor was violated upstream.
ParamVector inv_sqrt(const ParamVector& x);
double l2_norm_sq(const ParamVector& x);
double linf_norm(const ParamVector& x);
ParamVector scaled(double a, const ParamVector& x);
ParamVector subtract(const ParamVector& x, const ParamVector& y);

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const ParamVector& x, const ParamVector& y);

/// Stream tags for deriving independent random streams from one run seed.
enum class StreamTag : std::uint64_t {
  kData = 1,
  kPartition = 2,
  kServer = 3,
  kClient = 4,
  kInit = 5,
  kTest = 6,
};

/// xoshiro256** seeded through splitmix64. Distribution transforms are
/// implemented here rather than taken from <random>, whose distributions are
/// implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for (seed, tag, id, sub). Same inputs give the same
  /// stream on every platform.
  static Rng stream(std::uint64_t seed, StreamTag tag, std::uint64_t id = 0,
                    std::uint64_t sub = 0);

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform in (0, 1).
  double uniform_open() noexcept;
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal() noexcept;
  /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
  double gamma(double shape);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace fedsim
