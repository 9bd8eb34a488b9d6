#ifndef WSS_CORE_HPP
#define WSS_CORE_HPP

#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace wss {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Error hierarchy. Each class maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

/// System dimensions: K measurement branches, N bands, Q snapshots.
struct Dimensions {
  int K = 8;
  int N = 14;
  int Q = 299;

  void validate() const {
    require(K >= 1, "Dimensions: K must be >= 1");
    require(N >= K, "Dimensions: N must be >= K");
    require(Q >= 1, "Dimensions: Q must be >= 1");
  }
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// splitmix64 finalizer; used to derive independent RNG streams from a
// root seed and a tuple of indices, so results never depend on the order
// in which streams are consumed.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename... Ix>
constexpr std::uint64_t derive_seed(std::uint64_t root, Ix... ix) noexcept {
  std::uint64_t s = mix64(root);
  ((s = mix64(s ^ static_cast<std::uint64_t>(ix))), ...);
  return s;
}

using Rng = std::mt19937_64;

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline cplx complex_gaussian(Rng& rng, double variance = 1.0) {
  std::normal_distribution<double> dist(0.0, std::sqrt(variance / 2.0));
  const double re = dist(rng);
  const double im = dist(rng);
  return {re, im};
}

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t matrix_digest(const CMatrix& m) noexcept {
  const Eigen::Index dims[2] = {m.rows(), m.cols()};
  std::uint64_t h = fnv1a(dims, sizeof(dims));
  return fnv1a(m.data(), sizeof(cplx) * static_cast<std::size_t>(m.size()), h);
}

}  // namespace wss

#endif  // WSS_CORE_HPP
