#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "wss/omp.hpp"

using namespace wss;

namespace {

struct Instance {
  SensingMatrix a;
  OccupancyMask mask;
  SnsCapture y;
};

Instance make_instance(const Dimensions& d, int s, double snr, std::uint64_t seed,
                       ChannelModel ch = {}) {
  Instance in;
  in.a = generate_sensing_matrix(d, derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  in.mask = OccupancyMask::from_indices(d.N, random_support(d.N, s, rng));
  const auto x = generate_spectrum(d, in.mask, ch, derive_seed(seed, 3));
  in.y = capture(in.a, x, snr, derive_seed(seed, 4), ch);
  return in;
}

std::vector<int> sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(ColumnNormalize, UnitColumnsUnchanged) {
  CMatrix a(2, 2);
  a << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 1);
  EXPECT_EQ(column_normalize(a), a);
}

TEST(ColumnNormalize, ThreeFourFive) {
  CMatrix a(2, 1);
  a << cplx(3, 0), cplx(0, 4);
  const CMatrix n = column_normalize(a);
  EXPECT_NEAR(std::abs(n(0, 0) - cplx(0.6, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(n(1, 0) - cplx(0, 0.8)), 0.0, 1e-15);
}

TEST(ColumnNormalize, RandomUnitNorms) {
  const auto a = column_normalize(generate_sensing_matrix({8, 14, 1}, 3));
  for (int j = 0; j < a.cols(); ++j) EXPECT_NEAR(a.entries.col(j).norm(), 1.0, 1e-6);
}

TEST(ColumnNormalize, ZeroColumnRejected) {
  CMatrix a = CMatrix::Ones(3, 3);
  a.col(1).setZero();
  EXPECT_THROW(column_normalize(a), ValidationError);
}

TEST(Omp, SingleBandExact) {
  const auto in = make_instance({8, 14, 299}, 1, kInfinity, 5);
  const auto r = omp_recover(in.a, in.y, OmpConfig::known_sparsity(1));
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.mask(14), in.mask);
  EXPECT_LT(r.terminal_residual(), 1e-9);
}

double support_residual(const CMatrix& a, const CMatrix& y, const std::vector<int>& support) {
  CMatrix as(a.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i) as.col(static_cast<Eigen::Index>(i)) = a.col(support[i]);
  return (y - as * as.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y)).norm();
}

TEST(Omp, SingleBandMatchesBruteForce) {
  const Dimensions d{3, 5, 4};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto in = make_instance(d, 1, kInfinity, 100 + seed);
    const auto r = omp_recover(in.a, in.y, OmpConfig::known_sparsity(1));
    EXPECT_EQ(r.occupied_bands, oracle::best_support(in.a.entries, in.y.samples, 1)) << seed;
  }
}

TEST(Omp, NeverBeatsBruteForceResidual) {
  const Dimensions d{3, 5, 4};
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto in = make_instance(d, 2, kInfinity, 100 + seed);
    const auto r = omp_recover(in.a, in.y, OmpConfig::known_sparsity(2));
    const auto best = oracle::best_support(in.a.entries, in.y.samples, 2);
    EXPECT_LT(support_residual(in.a.entries, in.y.samples, best), 1e-9);
    EXPECT_GE(r.terminal_residual() + 1e-9, support_residual(in.a.entries, in.y.samples, best));
    const bool same = sorted(r.occupied_bands) == best;
    agree += same;
    if (same) EXPECT_LT(r.terminal_residual(), 1e-9);
  }
  // Greedy selection is not exact at this size; it still beats chance (1 in 10) by far.
  EXPECT_GT(agree, 100);
}

TEST(Omp, EssHighSnrKnownSparsity) {
  int hit = 0, total = 0, single_hit = 0, single_total = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const int s = 1 + static_cast<int>(seed % 3);
    const auto in = make_instance({8, 14, 299}, s, 30.0, 500 + seed);
    const auto m = omp_recover(in.a, in.y, OmpConfig::known_sparsity(s)).mask(14);
    for (int n = 0; n < 14; ++n)
      if (in.mask[n]) {
        ++total;
        hit += m[n];
        if (s == 1) {
          ++single_total;
          single_hit += m[n];
        }
      }
  }
  EXPECT_EQ(single_hit, single_total);
  EXPECT_GE(hit, 0.97 * total);
}

TEST(Omp, ResidualNonIncreasingAndNoReselection) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto in = make_instance({8, 14, 64}, 1 + static_cast<int>(seed % 7), -5.0 + seed % 20, 900 + seed,
                                  {ChannelKind::Rayleigh});
    const auto r = omp_recover(in.a, in.y, OmpConfig::residual_threshold(0.0));
    for (std::size_t i = 1; i < r.residual_norms.size(); ++i)
      EXPECT_LE(r.residual_norms[i], r.residual_norms[i - 1] * (1 + 1e-12) + 1e-12);
    const std::set<int> uniq(r.occupied_bands.begin(), r.occupied_bands.end());
    EXPECT_EQ(uniq.size(), r.occupied_bands.size());
    EXPECT_LE(r.iterations, 8);
  }
}

TEST(Omp, EpsilonModeSelectsTrueSupportNoiseless) {
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int s = 1 + static_cast<int>(seed % 4);
    const auto in = make_instance({8, 14, 299}, s, kInfinity, 1300 + seed);
    const auto known = omp_recover(in.a, in.y, OmpConfig::known_sparsity(s));
    if (known.mask(14) != in.mask) continue;
    ++exact;
    const auto r = omp_recover(in.a, in.y, OmpConfig::residual_threshold(1e-6));
    EXPECT_EQ(r.mask(14), in.mask) << seed;
    EXPECT_EQ(r.occupied_bands, known.occupied_bands) << seed;
  }
  EXPECT_GT(exact, 40);
}

TEST(Omp, EpsilonAboveInitialResidualStopsImmediately) {
  const auto in = make_instance({8, 14, 32}, 2, 10.0, 7);
  const auto r = omp_recover(in.a, in.y, OmpConfig::residual_threshold(in.y.samples.norm() * 2));
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.occupied_bands.empty());
}

TEST(Omp, ConfigValidation) {
  const auto in = make_instance({8, 14, 32}, 2, 10.0, 7);
  EXPECT_THROW(omp_recover(in.a, in.y, OmpConfig::known_sparsity(0)), ValidationError);
  EXPECT_THROW(omp_recover(in.a, in.y, OmpConfig::known_sparsity(9)), ValidationError);
  EXPECT_THROW(omp_recover(in.a, in.y, OmpConfig::residual_threshold(-1.0)), ValidationError);
  CMatrix bad = CMatrix::Ones(7, 32);
  EXPECT_THROW(omp_recover(in.a.entries, bad, OmpConfig::known_sparsity(1)), ValidationError);
}

TEST(Omp, RankDeficientSelectionReported) {
  // Columns 0 and 1 coincide; once column 0 explains Y, the zero-correlation
  // tie goes to column 1 and the selected pair is singular.
  CMatrix a(2, 3);
  a << cplx(1, 0), cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0), cplx(1, 0);
  CMatrix y(2, 1);
  y << cplx(1, 0), cplx(0, 0);
  try {
    omp_recover(a, y, OmpConfig::known_sparsity(2));
    FAIL() << "expected a rank-deficiency error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 2"), std::string::npos);
  }
}

TEST(Omp, TieBreaksToLowestIndex) {
  CMatrix a = CMatrix::Identity(2, 2);
  CMatrix y(2, 1);
  y << cplx(1, 0), cplx(1, 0);
  const auto r = omp_recover(a, y, OmpConfig::known_sparsity(1));
  EXPECT_EQ(r.occupied_bands, std::vector<int>{0});
}

TEST(Epsilon, NoiselessNearZero) {
  const auto a = generate_sensing_matrix({8, 14, 299}, 2);
  CalibrationConfig cfg{299, {kInfinity}, {}, 1, 1, 10, 3};
  const auto t = calibrate_epsilon(a, cfg);
  ASSERT_EQ(t.entries.size(), 1u);
  EXPECT_LT(t.entries[0].epsilon, 1e-6);
  EXPECT_GT(t.entries[0].epsilon, 0.0);
}

TEST(Epsilon, Deterministic) {
  const auto a = generate_sensing_matrix({8, 14, 64}, 2);
  CalibrationConfig cfg{64, {-10.0, 0.0, 10.0}, {}, 1, 3, 5, 9};
  const auto t1 = calibrate_epsilon(a, cfg);
  const auto t2 = calibrate_epsilon(a, cfg);
  for (std::size_t i = 0; i < t1.entries.size(); ++i) EXPECT_EQ(t1.entries[i].epsilon, t2.entries[i].epsilon);
}

TEST(Epsilon, SparsitySpreadBelowSnrVariation) {
  const auto a = generate_sensing_matrix({8, 14, 299}, 2);
  CalibrationConfig cfg{299, {-10.0, 0.0, 10.0}, {}, 1, 3, 20, 4};
  const auto t = calibrate_epsilon(a, cfg);
  double max_spread = 0.0;
  for (const auto& e : t.entries) {
    const auto [lo, hi] = std::minmax_element(e.per_sparsity.begin(), e.per_sparsity.end());
    max_spread = std::max(max_spread, *hi - *lo);
  }
  const double cross = t.entries.front().epsilon - t.entries.back().epsilon;
  EXPECT_GT(cross, 0.0);
  EXPECT_LT(max_spread, cross);
}

TEST(Epsilon, InterpolationAndLookup) {
  EpsilonTable t{{}, 1, {{0.0, 10.0, {}}, {10.0, 1.0, {}}}};
  EXPECT_DOUBLE_EQ(t.epsilon_for(0.0), 10.0);
  EXPECT_NEAR(t.epsilon_for(5.0), std::sqrt(10.0), 1e-12);
  EXPECT_DOUBLE_EQ(t.epsilon_for(-30.0), 10.0);
  EXPECT_DOUBLE_EQ(t.epsilon_for(30.0), 1.0);
  EXPECT_THROW(t.epsilon_for(kInfinity), ValidationError);
}

TEST(Epsilon, RejectsBadConfig) {
  const auto a = generate_sensing_matrix({8, 14, 16}, 2);
  EXPECT_THROW(calibrate_epsilon(a, {16, {0.0}, {}, 1, 3, 0, 1}), ValidationError);
  EXPECT_THROW(calibrate_epsilon(a, {16, {}, {}, 1, 3, 2, 1}), ValidationError);
  EXPECT_THROW(calibrate_epsilon(a, {16, {0.0}, {}, 3, 9, 2, 1}), ValidationError);
}

TEST(ChannelSensitivity, IdenticalAndSingle) {
  EpsilonTable t{{}, 1, {{0.0, 2.0, {}}, {10.0, 1.0, {}}}};
  EXPECT_EQ(epsilon_channel_sensitivity({t, t}).worst(), 0.0);
  EXPECT_EQ(epsilon_channel_sensitivity({t}).worst(), 0.0);
}

TEST(ChannelSensitivity, GridMismatchRejected) {
  EpsilonTable t{{}, 1, {{0.0, 2.0, {}}}};
  EpsilonTable u{{}, 1, {{5.0, 2.0, {}}}};
  EXPECT_THROW(epsilon_channel_sensitivity({t, u}), ValidationError);
}

TEST(ChannelSensitivity, ThreeChannelsSmall) {
  const auto a = generate_sensing_matrix({8, 14, 128}, 2);
  std::vector<EpsilonTable> tables;
  for (auto kind : {ChannelKind::AWGN, ChannelKind::Rayleigh, ChannelKind::Rician})
    tables.push_back(calibrate_epsilon(a, {128, {-10.0, 0.0, 10.0}, {kind, 4.0}, 1, 3, 20, 5}));
  const auto rep = epsilon_channel_sensitivity(tables);
  ASSERT_EQ(rep.snr_db.size(), 3u);
  EXPECT_LT(rep.worst(), 0.5);
}
