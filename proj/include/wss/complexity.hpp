#ifndef WSS_COMPLEXITY_HPP
#define WSS_COMPLEXITY_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "wss/core.hpp"
#include "wss/network.hpp"

namespace wss {

struct ComplexityParams {
  int K = 8;
  int N = 14;
  int Q = 299;
  int P = 8;

  void validate() const {
    require(K >= 1 && N >= 1 && Q >= 1, "ComplexityParams: K, N, Q must be positive");
    require(P >= 0 && P <= K, "ComplexityParams: P must lie in [0, K]");
  }
};

/// Real operation counts per OMP step over P iterations; a complex
/// multiply-add is two operations.
struct OmpOpCount {
  std::uint64_t matching = 0;
  std::uint64_t identification = 0;
  std::uint64_t least_squares = 0;
  std::uint64_t approximation = 0;

  std::uint64_t total() const { return matching + identification + least_squares + approximation; }
  std::string dominant() const {
    const std::uint64_t best = std::max({matching, identification, least_squares, approximation});
    if (best == matching) return "matching";
    if (best == least_squares) return "least_squares";
    if (best == approximation) return "approximation";
    return "identification";
  }
};

inline OmpOpCount omp_op_count(const ComplexityParams& p) {
  p.validate();
  const std::uint64_t k = static_cast<std::uint64_t>(p.K);
  const std::uint64_t n = static_cast<std::uint64_t>(p.N);
  const std::uint64_t q = static_cast<std::uint64_t>(p.Q);
  OmpOpCount c;
  c.identification = 2 * n * q;
  for (std::uint64_t i = 1; i <= static_cast<std::uint64_t>(p.P); ++i) {
    c.matching += 2 * k * q * (n - i + 1);
    c.least_squares += ((i - 1) * (4 * k - 1) + 3 * k + 1 + 2 * k + i * i) * q;
    c.approximation += 2 * k * q * i;
  }
  return c;
}

struct DlwssOpCount {
  std::vector<std::uint64_t> conv;  // per conv layer
  std::uint64_t fc = 0;

  std::uint64_t total() const {
    std::uint64_t t = fc;
    for (auto c : conv) t += c;
    return t;
  }
};

/// Conv layer: N (L - T + 1) 2T filters in_channels; FC: 2 in out.
inline DlwssOpCount dlwss_op_count(const NetworkSpec& spec) {
  spec.validate();
  const auto chain = spec.shape_chain();
  DlwssOpCount c;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& l = spec.conv[i];
    const std::uint64_t lout = static_cast<std::uint64_t>(chain[i].l - l.kernel_len + 1);
    c.conv.push_back(static_cast<std::uint64_t>(spec.bands) * lout * 2 *
                     static_cast<std::uint64_t>(l.kernel_len) * static_cast<std::uint64_t>(l.filters) *
                     static_cast<std::uint64_t>(l.in_channels));
  }
  c.fc = 2 * static_cast<std::uint64_t>(spec.fc.in) * static_cast<std::uint64_t>(spec.fc.out);
  return c;
}

}  // namespace wss

#endif  // WSS_COMPLEXITY_HPP
