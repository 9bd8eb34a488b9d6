#ifndef WSS_OMP_HPP
#define WSS_OMP_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "wss/core.hpp"
#include "wss/signal_model.hpp"

namespace wss {

enum class StopRule { KnownSparsity, ResidualThreshold };

struct OmpConfig {
  StopRule stop = StopRule::KnownSparsity;
  int sparsity = 1;
  double epsilon = 0.0;
  int max_iterations = 0;  // 0 selects K

  static OmpConfig known_sparsity(int s) { return {StopRule::KnownSparsity, s, 0.0, 0}; }
  static OmpConfig residual_threshold(double eps) {
    return {StopRule::ResidualThreshold, 0, eps, 0};
  }

  void validate(int k) const {
    if (stop == StopRule::KnownSparsity)
      require(sparsity >= 1 && sparsity <= k, "OmpConfig: sparsity must lie in [1, K]");
    else
      require(epsilon >= 0.0 && !std::isnan(epsilon), "OmpConfig: epsilon must be >= 0");
    require(max_iterations >= 0, "OmpConfig: max_iterations must be >= 1 (or 0 for K)");
  }
};

struct OmpResult {
  std::vector<int> occupied_bands;     // selection order
  std::vector<double> residual_norms;  // [0] = ||Y||_F, [i] = ||Res||_F after iteration i
  int iterations = 0;

  OccupancyMask mask(int n) const { return OccupancyMask::from_indices(n, occupied_bands); }
  double terminal_residual() const { return residual_norms.back(); }
};

/// Multiply-add instrumentation. One complex multiply-accumulate is booked as
/// two operations, the accounting under which the analytic matching count is
/// sum_i 2KQ(N - i + 1) and the approximation count is sum_i 2KQi.
struct OmpOpCounter {
  std::uint64_t matching = 0;
  std::uint64_t approximation = 0;
};

inline CMatrix column_normalize(const CMatrix& a) {
  CMatrix out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double norm = a.col(j).norm();
    if (norm == 0.0)
      throw ValidationError("column_normalize: column " + std::to_string(j) + " is zero");
    out.col(j) = a.col(j) / norm;
  }
  return out;
}

inline SensingMatrix column_normalize(const SensingMatrix& a) {
  return {column_normalize(a.entries), a.seed};
}

namespace detail {

// Tolerance on |R_ii| relative to the largest diagonal entry of R.
inline constexpr double kRankTolerance = 1e-10;

}  // namespace detail

/// Greedy support recovery of the joint-sparse Y = A X.
///
/// Each iteration correlates every not-yet-selected normalized column with the
/// residual block, picks the largest (lowest index on ties), and projects the
/// residual onto the orthogonal complement of the selected columns. Selected
/// columns are excluded from matching; after projection their correlation is
/// zero in exact arithmetic, so this only guards against rounding noise.
inline OmpResult omp_recover(const CMatrix& a, const CMatrix& y, const OmpConfig& config,
                             OmpOpCounter* ops = nullptr) {
  const Eigen::Index k = a.rows();
  const Eigen::Index n = a.cols();
  const Eigen::Index q = y.cols();
  if (y.rows() != k)
    throw ValidationError("omp_recover: Y has " + std::to_string(y.rows()) + " rows, A has " +
                          std::to_string(k));
  config.validate(static_cast<int>(k));
  const int cap = config.max_iterations > 0 ? config.max_iterations : static_cast<int>(k);

  const CMatrix an = column_normalize(a);
  CMatrix res = y;
  OmpResult out;
  out.residual_norms.push_back(res.norm());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<double> z(static_cast<std::size_t>(n), 0.0);

  const int limit = config.stop == StopRule::KnownSparsity ? std::min(config.sparsity, cap) : cap;
  while (out.iterations < limit && out.iterations < n) {
    if (config.stop == StopRule::ResidualThreshold && out.residual_norms.back() < config.epsilon)
      break;
    const int iter = out.iterations + 1;

    // Matching: Z[j] = || A_norm[:, j]^H Res ||_2 over the Q snapshots.
    for (Eigen::Index j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      double acc = 0.0;
      for (Eigen::Index c = 0; c < q; ++c) {
        cplx dot{0.0, 0.0};
        for (Eigen::Index r = 0; r < k; ++r) {
          dot += std::conj(an(r, j)) * res(r, c);
          if (ops) ops->matching += 2;
        }
        acc += std::norm(dot);
      }
      z[static_cast<std::size_t>(j)] = std::sqrt(acc);
    }

    // Identification.
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      if (best < 0 || z[static_cast<std::size_t>(j)] > z[static_cast<std::size_t>(best)]) best = j;
    }
    taken[static_cast<std::size_t>(best)] = 1;
    out.occupied_bands.push_back(static_cast<int>(best));

    // Least squares on the selected columns.
    const auto s = static_cast<Eigen::Index>(out.occupied_bands.size());
    CMatrix as(k, s);
    for (Eigen::Index i = 0; i < s; ++i)
      as.col(i) = an.col(out.occupied_bands[static_cast<std::size_t>(i)]);
    if (s > k)
      throw NumericalError("omp_recover: selected set exceeds K at iteration " +
                           std::to_string(iter));
    Eigen::HouseholderQR<CMatrix> qr(as);
    const CMatrix r = qr.matrixQR().topRows(s).template triangularView<Eigen::Upper>();
    double rmax = 0.0;
    for (Eigen::Index i = 0; i < s; ++i) rmax = std::max(rmax, std::abs(r(i, i)));
    for (Eigen::Index i = 0; i < s; ++i)
      if (std::abs(r(i, i)) <= detail::kRankTolerance * rmax || rmax == 0.0)
        throw NumericalError("omp_recover: rank-deficient selection at iteration " +
                             std::to_string(iter));
    const CMatrix coef = qr.solve(res);

    // Approximation: Res <- Res - As * coef.
    for (Eigen::Index c = 0; c < q; ++c) {
      for (Eigen::Index row = 0; row < k; ++row) {
        cplx acc{0.0, 0.0};
        for (Eigen::Index i = 0; i < s; ++i) {
          acc += as(row, i) * coef(i, c);
          if (ops) ops->approximation += 2;
        }
        res(row, c) -= acc;
      }
    }
    out.iterations = iter;
    out.residual_norms.push_back(res.norm());
  }
  return out;
}

inline OmpResult omp_recover(const SensingMatrix& a, const SnsCapture& y, const OmpConfig& config,
                             OmpOpCounter* ops = nullptr) {
  return omp_recover(a.entries, y.samples, config, ops);
}

struct EpsilonEntry {
  double snr_db = 0.0;
  double epsilon = 0.0;
  std::vector<double> per_sparsity;  // mean terminal residual per sparsity level
};

/// SNR-indexed residual thresholds for sparsity-agnostic recovery.
struct EpsilonTable {
  ChannelModel channel;
  int sparsity_min = 1;
  std::vector<EpsilonEntry> entries;

  /// Exact grid hit, otherwise log-linear interpolation clamped at the ends.
  double epsilon_for(double snr_db) const {
    require(!entries.empty(), "EpsilonTable: empty table");
    for (const auto& e : entries)
      if (e.snr_db == snr_db) return e.epsilon;
    std::vector<const EpsilonEntry*> finite;
    for (const auto& e : entries)
      if (std::isfinite(e.snr_db)) finite.push_back(&e);
    if (std::isinf(snr_db) || finite.empty())
      throw ValidationError("EpsilonTable: SNR " + std::to_string(snr_db) + " not in table");
    std::sort(finite.begin(), finite.end(),
              [](auto* x, auto* y) { return x->snr_db < y->snr_db; });
    if (snr_db <= finite.front()->snr_db) return finite.front()->epsilon;
    if (snr_db >= finite.back()->snr_db) return finite.back()->epsilon;
    for (std::size_t i = 1; i < finite.size(); ++i) {
      if (snr_db <= finite[i]->snr_db) {
        const auto* lo = finite[i - 1];
        const auto* hi = finite[i];
        const double t = (snr_db - lo->snr_db) / (hi->snr_db - lo->snr_db);
        return std::exp((1 - t) * std::log(lo->epsilon) + t * std::log(hi->epsilon));
      }
    }
    return finite.back()->epsilon;
  }
};

struct CalibrationConfig {
  int Q = 299;
  std::vector<double> snr_grid_db;
  ChannelModel channel;
  int sparsity_min = 1;
  int sparsity_max = 3;
  int trials = 100;
  std::uint64_t seed = 1;
};

/// Mean terminal residual of known-sparsity recovery, per SNR, averaged
/// over trials and sparsity levels.
inline EpsilonTable calibrate_epsilon(const SensingMatrix& a, const CalibrationConfig& cfg) {
  require(cfg.trials >= 1, "calibrate_epsilon: trials must be >= 1");
  require(cfg.sparsity_min >= 1 && cfg.sparsity_min <= cfg.sparsity_max &&
              cfg.sparsity_max <= a.rows(),
          "calibrate_epsilon: sparsity range must lie within [1, K]");
  require(!cfg.snr_grid_db.empty(), "calibrate_epsilon: empty SNR grid");
  const Dimensions dims{a.rows(), a.cols(), cfg.Q};
  dims.validate();

  EpsilonTable table{cfg.channel, cfg.sparsity_min, {}};
  for (std::size_t g = 0; g < cfg.snr_grid_db.size(); ++g) {
    const double snr = cfg.snr_grid_db[g];
    EpsilonEntry e{snr, 0.0, {}};
    double total = 0.0;
    for (int s = cfg.sparsity_min; s <= cfg.sparsity_max; ++s) {
      double sum = 0.0;
      for (int t = 0; t < cfg.trials; ++t) {
        const std::uint64_t base = derive_seed(cfg.seed, g, static_cast<std::uint64_t>(s),
                                               static_cast<std::uint64_t>(t));
        Rng rng(derive_seed(base, 1));
        const auto mask = OccupancyMask::from_indices(dims.N, random_support(dims.N, s, rng));
        const auto x = generate_spectrum(dims, mask, cfg.channel, derive_seed(base, 2));
        const auto y = capture(a, x, snr, derive_seed(base, 3), cfg.channel);
        sum += omp_recover(a, y, OmpConfig::known_sparsity(s)).terminal_residual();
      }
      e.per_sparsity.push_back(sum / cfg.trials);
      total += sum;
    }
    e.epsilon = total / (static_cast<double>(cfg.trials) * (cfg.sparsity_max - cfg.sparsity_min + 1));
    if (!(e.epsilon > 0.0)) e.epsilon = std::numeric_limits<double>::min();
    table.entries.push_back(std::move(e));
  }
  return table;
}

struct ChannelSensitivity {
  std::vector<double> snr_db;
  std::vector<double> max_relative_deviation;  // max_c |eps_c - mean| / mean

  double worst() const {
    return max_relative_deviation.empty()
               ? 0.0
               : *std::max_element(max_relative_deviation.begin(), max_relative_deviation.end());
  }
};

inline ChannelSensitivity epsilon_channel_sensitivity(const std::vector<EpsilonTable>& tables) {
  require(!tables.empty(), "epsilon_channel_sensitivity: no tables");
  const auto& ref = tables.front().entries;
  for (const auto& t : tables) {
    if (t.entries.size() != ref.size())
      throw ValidationError("epsilon_channel_sensitivity: SNR grids differ in length");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (t.entries[i].snr_db != ref[i].snr_db)
        throw ValidationError("epsilon_channel_sensitivity: SNR grids differ");
  }
  ChannelSensitivity out;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    double mean = 0.0;
    for (const auto& t : tables) mean += t.entries[i].epsilon;
    mean /= static_cast<double>(tables.size());
    double dev = 0.0;
    for (const auto& t : tables) dev = std::max(dev, std::abs(t.entries[i].epsilon - mean) / mean);
    out.snr_db.push_back(ref[i].snr_db);
    out.max_relative_deviation.push_back(dev);
  }
  return out;
}

}  // namespace wss

#endif  // WSS_OMP_HPP
