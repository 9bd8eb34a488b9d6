#ifndef WSS_SIGNAL_MODEL_HPP
#define WSS_SIGNAL_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "wss/core.hpp"

namespace wss {

/// K x N measurement operator aliasing N bands onto K branches.
struct SensingMatrix {
  CMatrix entries;
  std::uint64_t seed = 0;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
  std::uint64_t digest() const { return matrix_digest(entries); }
};

/// Per-band vacancy bits, 1 = occupied.
struct OccupancyMask {
  std::vector<std::uint8_t> bits;

  OccupancyMask() = default;
  explicit OccupancyMask(int n) : bits(static_cast<std::size_t>(n), 0) {}

  static OccupancyMask from_indices(int n, const std::vector<int>& occupied) {
    OccupancyMask m(n);
    for (int i : occupied) {
      require(i >= 0 && i < n, "OccupancyMask: band index out of range");
      m.bits[static_cast<std::size_t>(i)] = 1;
    }
    return m;
  }

  static OccupancyMask from_string(std::string_view s) {
    OccupancyMask m(static_cast<int>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(s[i] == '0' || s[i] == '1', "OccupancyMask: expected a bit string");
      m.bits[i] = s[i] == '1';
    }
    return m;
  }

  int size() const { return static_cast<int>(bits.size()); }
  bool operator[](int n) const { return bits[static_cast<std::size_t>(n)] != 0; }
  int popcount() const { return static_cast<int>(std::count(bits.begin(), bits.end(), 1)); }

  std::string to_string() const {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) s[i] = '1';
    return s;
  }

  friend bool operator==(const OccupancyMask&, const OccupancyMask&) = default;
};

/// Nyquist-equivalent band content, N x Q; row n is band n.
struct WidebandSpectrum {
  CMatrix samples;
};

enum class ChannelKind { AWGN, Rayleigh, Rician };

inline std::string to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::AWGN: return "awgn";
    case ChannelKind::Rayleigh: return "rayleigh";
    case ChannelKind::Rician: return "rician";
  }
  return "?";
}

inline ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "awgn" || s == "AWGN") return ChannelKind::AWGN;
  if (s == "rayleigh" || s == "Rayleigh") return ChannelKind::Rayleigh;
  if (s == "rician" || s == "Rician") return ChannelKind::Rician;
  throw ValidationError("unknown channel kind '" + std::string(s) + "'");
}

struct ChannelModel {
  ChannelKind kind = ChannelKind::AWGN;
  double rician_k_factor = 4.0;

  void validate() const {
    require(rician_k_factor >= 0.0, "ChannelModel: Rician k-factor must be >= 0");
  }
  friend bool operator==(const ChannelModel&, const ChannelModel&) = default;
};

/// One flat complex gain with E|g|^2 = 1.
inline cplx draw_channel_gain(const ChannelModel& ch, Rng& rng) {
  switch (ch.kind) {
    case ChannelKind::AWGN:
      return {1.0, 0.0};
    case ChannelKind::Rayleigh:
      return complex_gaussian(rng, 1.0);
    case ChannelKind::Rician: {
      const double k = ch.rician_k_factor;
      std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
      const cplx los = std::polar(std::sqrt(k / (k + 1.0)), phase(rng));
      return los + complex_gaussian(rng, 1.0 / (k + 1.0));
    }
  }
  return {1.0, 0.0};
}

/// Sub-Nyquist sample block Y, K x Q.
struct SnsCapture {
  CMatrix samples;
  double snr_db = kInfinity;
  ChannelModel channel;
  std::uint64_t matrix_hash = 0;  // digest of the A that produced it, 0 if unknown
};

inline SensingMatrix generate_sensing_matrix(const Dimensions& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(derive_seed(seed, 0x5e45));
  SensingMatrix a{CMatrix(dims.K, dims.N), seed};
  // column-major draw order so that column j only depends on (seed, j)-prefix
  for (int j = 0; j < dims.N; ++j)
    for (int i = 0; i < dims.K; ++i) a.entries(i, j) = complex_gaussian(rng);
  for (int j = 0; j < dims.N; ++j)
    if (a.entries.col(j).squaredNorm() == 0.0)
      throw NumericalError("generate_sensing_matrix: zero column drawn");
  return a;
}

inline WidebandSpectrum generate_spectrum(const Dimensions& dims, const OccupancyMask& occupied,
                                          const ChannelModel& channel, std::uint64_t seed) {
  dims.validate();
  channel.validate();
  require(occupied.size() == dims.N, "generate_spectrum: mask length must equal N");
  WidebandSpectrum x{CMatrix::Zero(dims.N, dims.Q)};
  for (int n = 0; n < dims.N; ++n) {
    if (!occupied[n]) continue;
    Rng rng(derive_seed(seed, n));
    const cplx g = draw_channel_gain(channel, rng);
    for (int q = 0; q < dims.Q; ++q) x.samples(n, q) = g * complex_gaussian(rng);
  }
  return x;
}

/// Y = A X + W with the noise power set against the measured power of A X.
inline SnsCapture capture(const SensingMatrix& a, const WidebandSpectrum& x, double snr_db,
                          std::uint64_t seed, const ChannelModel& channel = {}) {
  if (a.entries.cols() != x.samples.rows())
    throw ValidationError("capture: A has " + std::to_string(a.entries.cols()) +
                          " columns but X has " + std::to_string(x.samples.rows()) + " rows");
  require(!std::isnan(snr_db) && snr_db != -kInfinity, "capture: SNR must be a number or +inf");
  SnsCapture y{a.entries * x.samples, snr_db, channel, a.digest()};
  const double signal_power = y.samples.squaredNorm() / static_cast<double>(y.samples.size());
  if (std::isinf(snr_db)) return y;
  if (signal_power == 0.0) return y;
  const double noise_power = signal_power / std::pow(10.0, snr_db / 10.0);
  Rng rng(derive_seed(seed, 0x7019e));
  for (Eigen::Index q = 0; q < y.samples.cols(); ++q)
    for (Eigen::Index k = 0; k < y.samples.rows(); ++k)
      y.samples(k, q) += complex_gaussian(rng, noise_power);
  return y;
}

/// Uniformly random support of the given size.
inline std::vector<int> random_support(int n, int size, Rng& rng) {
  require(size >= 0 && size <= n, "random_support: size out of range");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < size; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(size));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct DatasetSpec {
  Dimensions dims;
  int sparsity_min = 1;
  int sparsity_max = 3;
  std::vector<double> snr_grid_db{10.0};
  ChannelModel channel;
  int samples_per_cell = 1;
  std::uint64_t seed = 1;
  std::uint64_t matrix_seed = 1;
  bool keep_spectrum = true;

  void validate() const {
    dims.validate();
    channel.validate();
    require(sparsity_min >= 0 && sparsity_min <= sparsity_max && sparsity_max <= dims.N,
            "DatasetSpec: sparsity range must lie within [0, N]");
    require(samples_per_cell >= 1, "DatasetSpec: samples_per_cell must be >= 1");
    require(!snr_grid_db.empty(), "DatasetSpec: SNR grid must not be empty");
  }
};

/// Extremely sparse regime: 1 to 3 occupied bands.
inline DatasetSpec ess_spec() {
  DatasetSpec s;
  s.sparsity_min = 1;
  s.sparsity_max = 3;
  return s;
}

/// Highly sparse regime: 4 to 7 occupied bands.
inline DatasetSpec hss_spec() {
  DatasetSpec s;
  s.sparsity_min = 4;
  s.sparsity_max = 7;
  return s;
}

struct Sample {
  SnsCapture capture;
  OccupancyMask mask;
  WidebandSpectrum spectrum;  // empty when the spec drops spectra
};

struct Dataset {
  DatasetSpec spec;
  SensingMatrix matrix;
  std::vector<Sample> samples;
};

/// Draws one sample of a dataset cell. Streams depend only on
/// (root seed, cell, sample), so cells may be generated in any order.
inline Sample generate_sample(const DatasetSpec& spec, const SensingMatrix& a, int sparsity,
                              double snr_db, std::uint64_t cell, std::uint64_t index) {
  const std::uint64_t base = derive_seed(spec.seed, cell, index);
  Rng rng(derive_seed(base, 1));
  const auto support = random_support(spec.dims.N, sparsity, rng);
  Sample s;
  s.mask = OccupancyMask::from_indices(spec.dims.N, support);
  s.spectrum = generate_spectrum(spec.dims, s.mask, spec.channel, derive_seed(base, 2));
  s.capture = capture(a, s.spectrum, snr_db, derive_seed(base, 3), spec.channel);
  if (!spec.keep_spectrum) s.spectrum.samples.resize(0, 0);
  return s;
}

inline Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d{spec, generate_sensing_matrix(spec.dims, spec.matrix_seed), {}};
  const auto grid = spec.snr_grid_db.size();
  d.samples.reserve(static_cast<std::size_t>(spec.sparsity_max - spec.sparsity_min + 1) * grid *
                    static_cast<std::size_t>(spec.samples_per_cell));
  for (int s = spec.sparsity_min; s <= spec.sparsity_max; ++s) {
    for (std::size_t g = 0; g < grid; ++g) {
      const std::uint64_t cell = static_cast<std::uint64_t>(s - spec.sparsity_min) * grid + g;
      for (int i = 0; i < spec.samples_per_cell; ++i)
        d.samples.push_back(generate_sample(spec, d.matrix, s, spec.snr_grid_db[g], cell,
                                            static_cast<std::uint64_t>(i)));
    }
  }
  return d;
}

/// Empirical SNR (dB) of a capture against its noiseless part A X.
inline double measured_snr_db(const SensingMatrix& a, const WidebandSpectrum& x,
                              const SnsCapture& y) {
  const CMatrix clean = a.entries * x.samples;
  const double ps = clean.squaredNorm();
  const double pn = (y.samples - clean).squaredNorm();
  return 10.0 * std::log10(ps / pn);
}

}  // namespace wss

#endif  // WSS_SIGNAL_MODEL_HPP
