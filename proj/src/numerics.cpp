#include "fedsim/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace fedsim {

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const ParamVector& x, const std::string& what) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!std::isfinite(x[j])) {
      throw NonFiniteError(what + ": non-finite value " + std::to_string(x[j]) + " at index " +
                           std::to_string(j));
    }
  }
}

void require_same_dim(const ParamVector& x, const ParamVector& y, const char* op) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(op) + ": dimension mismatch (" + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()) + ")");
  }
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "axpy");
  if (!std::isfinite(a)) throw NonFiniteError("axpy: non-finite scale");
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = a * x[j] + y[j];
  require_finite(out, "axpy");
  return out;
}

ParamVector hadamard(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "hadamard");
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * y[j];
  require_finite(out, "hadamard");
  return out;
}

ParamVector elementwise_max(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "elementwise_max");
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::max(x[j], y[j]);
  require_finite(out, "elementwise_max");
  return out;
}

ParamVector inv_sqrt(const ParamVector& x) {
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] > 0.0)) {
      throw std::domain_error("inv_sqrt: nonpositive entry " + std::to_string(x[j]) +
                              " at index " + std::to_string(j));
    }
    out[j] = 1.0 / std::sqrt(x[j]);
  }
  require_finite(out, "inv_sqrt");
  return out;
}

double l2_norm_sq(const ParamVector& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double linf_norm(const ParamVector& x) {
  double s = 0.0;
  for (double v : x) s = std::max(s, std::abs(v));
  return s;
}

ParamVector scaled(double a, const ParamVector& x) {
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = a * x[j];
  require_finite(out, "scaled");
  return out;
}

ParamVector subtract(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "subtract");
  ParamVector out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - y[j];
  require_finite(out, "subtract");
  return out;
}

bool bitwise_equal(const ParamVector& x, const ParamVector& y) {
  if (x.size() != y.size()) return false;
  return x.empty() || std::memcmp(x.span().data(), y.span().data(), x.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, StreamTag tag, std::uint64_t id, std::uint64_t sub) {
  std::uint64_t h = seed;
  std::uint64_t mixed = splitmix64(h);
  for (std::uint64_t word : {static_cast<std::uint64_t>(tag), id, sub}) {
    h = mixed ^ (word * 0xD1B54A32D192ED03ULL);
    mixed = splitmix64(h);
  }
  return Rng(mixed);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() noexcept {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  // Lemire's multiply-shift with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("Rng::gamma: shape must be positive and finite");
  }
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace fedsim
