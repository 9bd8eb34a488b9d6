#ifndef WSS_PREPROCESS_HPP
#define WSS_PREPROCESS_HPP

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "wss/core.hpp"
#include "wss/signal_model.hpp"
#include "wss/tensor.hpp"

namespace wss {

/// P G = L D U with L unit lower, D diagonal, U unit upper.
struct LduFactors {
  CMatrix lower;
  CVector diag;
  CMatrix upper;
  std::vector<int> perm;  // row i of P G is row perm[i] of G
};

inline constexpr double kPivotTolerance = 1e-12;

/// Partial-pivoting LDU factorization of a square matrix. A pivot whose
/// magnitude is below kPivotTolerance times the largest entry of the input
/// is treated as zero.
inline LduFactors ldu_factorize(const CMatrix& g) {
  require(g.rows() == g.cols(), "ldu_factorize: matrix must be square");
  const Eigen::Index k = g.rows();
  CMatrix work = g;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  const double scale = g.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw NumericalError("ldu_factorize: zero matrix");

  for (Eigen::Index col = 0; col < k; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < k; ++r)
      if (std::abs(work(r, col)) > std::abs(work(piv, col))) piv = r;
    if (std::abs(work(piv, col)) < kPivotTolerance * scale)
      throw NumericalError("ldu_factorize: singular matrix (zero pivot at column " +
                           std::to_string(col) + ")");
    if (piv != col) {
      work.row(col).swap(work.row(piv));
      std::swap(perm[static_cast<std::size_t>(col)], perm[static_cast<std::size_t>(piv)]);
    }
    for (Eigen::Index r = col + 1; r < k; ++r) {
      const cplx m = work(r, col) / work(col, col);
      work(r, col) = m;
      for (Eigen::Index c = col + 1; c < k; ++c) work(r, c) -= m * work(col, c);
    }
  }

  LduFactors f{CMatrix::Identity(k, k), CVector(k), CMatrix::Identity(k, k), std::move(perm)};
  for (Eigen::Index i = 0; i < k; ++i) {
    f.diag(i) = work(i, i);
    for (Eigen::Index j = 0; j < i; ++j) f.lower(i, j) = work(i, j);
    for (Eigen::Index j = i + 1; j < k; ++j) f.upper(i, j) = work(i, j) / work(i, i);
  }
  return f;
}

namespace detail {

inline CMatrix invert_unit_lower(const CMatrix& l) {
  const Eigen::Index k = l.rows();
  CMatrix inv = CMatrix::Identity(k, k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index r = c + 1; r < k; ++r) {
      cplx acc{0.0, 0.0};
      for (Eigen::Index j = c; j < r; ++j) acc += l(r, j) * inv(j, c);
      inv(r, c) = -acc;
    }
  return inv;
}

inline CMatrix invert_unit_upper(const CMatrix& u) {
  const Eigen::Index k = u.rows();
  CMatrix inv = CMatrix::Identity(k, k);
  for (Eigen::Index c = k - 1; c >= 0; --c)
    for (Eigen::Index r = c - 1; r >= 0; --r) {
      cplx acc{0.0, 0.0};
      for (Eigen::Index j = r + 1; j <= c; ++j) acc += u(r, j) * inv(j, c);
      inv(r, c) = -acc;
    }
  return inv;
}

}  // namespace detail

/// G^-1 = U^-1 D^-1 L^-1 P.
inline CMatrix inverse_from_ldu(const LduFactors& f) {
  const Eigen::Index k = f.diag.size();
  CMatrix left = detail::invert_unit_upper(f.upper);
  for (Eigen::Index j = 0; j < k; ++j) left.col(j) /= f.diag(j);
  const CMatrix unperm = left * detail::invert_unit_lower(f.lower);
  CMatrix inv(k, k);
  for (Eigen::Index i = 0; i < k; ++i) inv.col(f.perm[static_cast<std::size_t>(i)]) = unperm.col(i);
  return inv;
}

/// Right pseudo-inverse A^dagger = A^H (A A^H)^-1, N x K.
struct PseudoInverse {
  CMatrix entries;
  std::uint64_t source_matrix_hash = 0;
};

/// The Gram matrix is the K x K product A A^H rather than the N x N A^H A:
/// with K < N the latter is rank-deficient and has no LU inverse.
inline PseudoInverse pseudo_inverse_lu(const CMatrix& a) {
  const CMatrix gram = a * a.adjoint();
  const auto factors = ldu_factorize(gram);
  return {a.adjoint() * inverse_from_ldu(factors), matrix_digest(a)};
}

inline PseudoInverse pseudo_inverse_lu(const SensingMatrix& a) {
  return pseudo_inverse_lu(a.entries);
}

/// Minimum-norm solution of A X = Y.
inline CMatrix pseudo_recover(const PseudoInverse& ad, const SnsCapture& y) {
  if (ad.entries.cols() != y.samples.rows())
    throw ValidationError("pseudo_recover: pseudo-inverse has " +
                          std::to_string(ad.entries.cols()) + " columns, capture has " +
                          std::to_string(y.samples.rows()) + " rows");
  if (y.matrix_hash != 0 && ad.source_matrix_hash != 0 && y.matrix_hash != ad.source_matrix_hash)
    throw ValidationError("pseudo_recover: capture was produced by a different sensing matrix");
  return ad.entries * y.samples;
}

struct NormStats {
  double mean = 0.0;
  double scale = 1.0;  // standard deviation divided out; 0 when the input was constant
};

/// N x Q x 2 real view of a complex block (channel 0 real, channel 1 imaginary).
struct RealTensor {
  Tensor3<double> values;
  NormStats stats;
};

inline RealTensor to_real_channels(const CMatrix& x) {
  RealTensor t{Tensor3<double>(static_cast<int>(x.rows()), static_cast<int>(x.cols()), 2), {}};
  for (Eigen::Index n = 0; n < x.rows(); ++n)
    for (Eigen::Index q = 0; q < x.cols(); ++q) {
      t.values(static_cast<int>(n), static_cast<int>(q), 0) = x(n, q).real();
      t.values(static_cast<int>(n), static_cast<int>(q), 1) = x(n, q).imag();
    }
  return t;
}

inline CMatrix from_real_channels(const RealTensor& t) {
  require(t.values.c == 2, "from_real_channels: expected two channels");
  CMatrix x(t.values.n, t.values.l);
  for (int n = 0; n < t.values.n; ++n)
    for (int q = 0; q < t.values.l; ++q) x(n, q) = {t.values(n, q, 0), t.values(n, q, 1)};
  return x;
}

inline constexpr double kMinStd = 1e-12;

/// Standardize over every entry of the tensor.
inline RealTensor normalize(const RealTensor& t) {
  RealTensor out = t;
  const auto& v = t.values.data;
  if (v.empty()) return out;
  const double count = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / count;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / count);
  if (sd < kMinStd) {
    std::fill(out.values.data.begin(), out.values.data.end(), 0.0);
    out.stats = {mean, 0.0};
    return out;
  }
  for (double& x : out.values.data) x = (x - mean) / sd;
  out.stats = {mean, sd};
  return out;
}

/// Full front end: minimum-norm recovery, real split, standardization.
inline RealTensor preprocess(const PseudoInverse& ad, const SnsCapture& y) {
  return normalize(to_real_channels(pseudo_recover(ad, y)));
}

}  // namespace wss

#endif  // WSS_PREPROCESS_HPP
