#ifndef WSS_TILING_HPP
#define WSS_TILING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wss/network.hpp"

namespace wss {

/// Block sizes over output channels, input channels, output rows (bands)
/// and output columns (time).
struct TilingConfig {
  int To = 1;
  int Ti = 1;
  int Tr = 1;
  int Tc = 1;

  void validate() const {
    require(To >= 1 && Ti >= 1 && Tr >= 1 && Tc >= 1, "TilingConfig: all factors must be >= 1");
  }
  std::string str() const {
    return "<" + std::to_string(To) + "," + std::to_string(Ti) + "," + std::to_string(Tr) + "," +
           std::to_string(Tc) + ">";
  }
  friend bool operator==(const TilingConfig&, const TilingConfig&) = default;
};

inline constexpr double kBitsPerMib = 1048576.0;

struct MemoryFootprint {
  std::uint64_t input_tile_bits = 0;
  std::uint64_t weight_tile_bits = 0;
  std::uint64_t output_tile_bits = 0;
  std::uint64_t total_bits = 0;

  static double mib(std::uint64_t bits) { return static_cast<double>(bits) / kBitsPerMib; }
  double input_mib() const { return mib(input_tile_bits); }
  double weight_mib() const { return mib(weight_tile_bits); }
  double output_mib() const { return mib(output_tile_bits); }
  double total_mib() const { return mib(total_bits); }
};

struct AccessTrace {
  std::uint64_t ddr_reads_bits = 0;
  std::uint64_t ddr_writes_bits = 0;
  std::uint64_t tile_loads = 0;
  std::uint64_t mac_ops = 0;

  AccessTrace& operator+=(const AccessTrace& o) {
    ddr_reads_bits += o.ddr_reads_bits;
    ddr_writes_bits += o.ddr_writes_bits;
    tile_loads += o.tile_loads;
    mac_ops += o.mac_ops;
    return *this;
  }
  friend bool operator==(const AccessTrace&, const AccessTrace&) = default;
};

namespace detail {

inline void check_word_bits(int word_bits) {
  require(word_bits >= 8 && word_bits <= 64, "word_bits must lie in [8, 64]");
}

struct Tile {
  int f0, nf;  // output channels
  int n0, nn;  // band rows
  int t0, nt;  // output columns
  int c0, nc;  // input channels
};

/// Walks the tile schedule of one conv layer: output-channel tiles outermost,
/// then band rows, then output columns, then input-channel tiles. `on_tile`
/// runs once per loaded (input, weight) tile pair; `on_store` once per output
/// tile after its last input-channel tile.
template <typename OnTile, typename OnStore>
void walk_tiles(int bands, int lout, int filters, int channels, const TilingConfig& cfg,
                OnTile&& on_tile, OnStore&& on_store) {
  for (int f0 = 0; f0 < filters; f0 += cfg.To)
    for (int n0 = 0; n0 < bands; n0 += cfg.Tr)
      for (int t0 = 0; t0 < lout; t0 += cfg.Tc) {
        Tile tile{f0, std::min(cfg.To, filters - f0), n0, std::min(cfg.Tr, bands - n0),
                  t0, std::min(cfg.Tc, lout - t0),     0,  0};
        for (int c0 = 0; c0 < channels; c0 += cfg.Ti) {
          tile.c0 = c0;
          tile.nc = std::min(cfg.Ti, channels - c0);
          on_tile(tile);
        }
        on_store(tile);
      }
}

}  // namespace detail

/// DDR traffic of one conv layer under the tile schedule, without computing.
/// Biases are kept on chip and not counted.
inline AccessTrace simulate_traffic(int bands, int in_len, const ConvLayerSpec& layer,
                                    const TilingConfig& cfg, int word_bits = 32) {
  cfg.validate();
  detail::check_word_bits(word_bits);
  require(bands >= 1 && in_len >= layer.kernel_len, "simulate_traffic: bad layer geometry");
  const int lout = in_len - layer.kernel_len + 1;
  const auto bits = static_cast<std::uint64_t>(word_bits);
  const auto kt = static_cast<std::uint64_t>(layer.kernel_len);
  AccessTrace tr;
  detail::walk_tiles(
      bands, lout, layer.filters, layer.in_channels, cfg,
      [&](const detail::Tile& t) {
        const std::uint64_t in_words =
            static_cast<std::uint64_t>(t.nn) * (static_cast<std::uint64_t>(t.nt) + kt - 1) * t.nc;
        const std::uint64_t w_words = static_cast<std::uint64_t>(t.nf) * t.nc * kt;
        tr.ddr_reads_bits += (in_words + w_words) * bits;
        ++tr.tile_loads;
        tr.mac_ops += static_cast<std::uint64_t>(t.nn) * t.nt * t.nf * t.nc * kt;
      },
      [&](const detail::Tile& t) {
        tr.ddr_writes_bits += static_cast<std::uint64_t>(t.nf) * t.nn * t.nt * bits;
      });
  return tr;
}

/// Tiled execution of conv1d_forward. Each output element starts at its
/// bias and receives one fused multiply-add per (channel, tap) in ascending
/// order across input-channel tiles, so the result is bit-identical to the
/// untiled pass for any configuration.
template <typename T>
Tensor3<T> tiled_conv_forward(const Tensor3<T>& in, const ConvWeights<T>& w,
                              const TilingConfig& cfg, AccessTrace* trace = nullptr,
                              int word_bits = 32) {
  cfg.validate();
  detail::check_word_bits(word_bits);
  if (in.c != w.in_channels)
    throw ValidationError("tiled_conv_forward: input has " + std::to_string(in.c) +
                          " channels, layer expects " + std::to_string(w.in_channels));
  if (in.l < w.kernel_len)
    throw ValidationError("tiled_conv_forward: input length " + std::to_string(in.l) +
                          " shorter than kernel " + std::to_string(w.kernel_len));
  const int kt = w.kernel_len;
  const int lout = in.l - kt + 1;
  Tensor3<T> out(in.n, lout, w.filters);
  // On-chip buffers at the configured tile size.
  std::vector<T> in_buf(static_cast<std::size_t>(cfg.Tr) * (cfg.Tc + kt - 1) * cfg.Ti);
  std::vector<T> w_buf(static_cast<std::size_t>(cfg.To) * cfg.Ti * kt);
  std::vector<T> out_buf(static_cast<std::size_t>(cfg.To) * cfg.Tr * cfg.Tc);
  const int in_cols = cfg.Tc + kt - 1;
  auto ib = [&](int r, int col, int c) -> T& {
    return in_buf[(static_cast<std::size_t>(r) * in_cols + col) * cfg.Ti + c];
  };
  auto wb = [&](int f, int c, int tau) -> T& {
    return w_buf[(static_cast<std::size_t>(f) * cfg.Ti + c) * kt + tau];
  };
  auto ob = [&](int f, int r, int t) -> T& {
    return out_buf[(static_cast<std::size_t>(f) * cfg.Tr + r) * cfg.Tc + t];
  };

  detail::walk_tiles(
      in.n, lout, w.filters, w.in_channels, cfg,
      [&](const detail::Tile& t) {
        const int cols = t.nt + kt - 1;
        for (int r = 0; r < t.nn; ++r)
          for (int col = 0; col < cols; ++col)
            for (int c = 0; c < t.nc; ++c) ib(r, col, c) = in(t.n0 + r, t.t0 + col, t.c0 + c);
        for (int f = 0; f < t.nf; ++f)
          for (int c = 0; c < t.nc; ++c)
            for (int tau = 0; tau < kt; ++tau) wb(f, c, tau) = w.k(t.f0 + f, t.c0 + c, tau);
        if (t.c0 == 0)
          for (int f = 0; f < t.nf; ++f)
            for (int r = 0; r < t.nn; ++r)
              for (int x = 0; x < t.nt; ++x) ob(f, r, x) = w.bias[static_cast<std::size_t>(t.f0 + f)];
        for (int f = 0; f < t.nf; ++f)
          for (int r = 0; r < t.nn; ++r)
            for (int x = 0; x < t.nt; ++x) {
              T acc = ob(f, r, x);
              for (int c = 0; c < t.nc; ++c)
                for (int tau = 0; tau < kt; ++tau) acc = std::fma(ib(r, x + tau, c), wb(f, c, tau), acc);
              ob(f, r, x) = acc;
            }
      },
      [&](const detail::Tile& t) {
        for (int f = 0; f < t.nf; ++f)
          for (int r = 0; r < t.nn; ++r)
            for (int x = 0; x < t.nt; ++x) out(t.n0 + r, t.t0 + x, t.f0 + f) = ob(f, r, x);
      });
  if (trace)
    *trace = simulate_traffic(in.n, in.l, {w.filters, kt, w.in_channels}, cfg, word_bits);
  return out;
}

/// On-chip buffer sizes at the configured (unclipped) tile dimensions.
inline MemoryFootprint footprint(const ConvLayerSpec& layer, const TilingConfig& cfg,
                                 int word_bits = 32) {
  cfg.validate();
  detail::check_word_bits(word_bits);
  require(layer.kernel_len >= 1, "footprint: kernel length must be >= 1");
  const auto bits = static_cast<std::uint64_t>(word_bits);
  const auto kt = static_cast<std::uint64_t>(layer.kernel_len);
  MemoryFootprint fp;
  fp.input_tile_bits = static_cast<std::uint64_t>(cfg.Tr) * (cfg.Tc + kt - 1) * cfg.Ti * bits;
  fp.weight_tile_bits = static_cast<std::uint64_t>(cfg.To) * cfg.Ti * kt * bits;
  fp.output_tile_bits = static_cast<std::uint64_t>(cfg.To) * cfg.Tr * cfg.Tc * bits;
  fp.total_bits = fp.input_tile_bits + fp.weight_tile_bits + fp.output_tile_bits;
  return fp;
}

/// Bits needed to hold every weight and bias plus the network input on chip.
/// A spec with no layers and zero dimensions needs nothing.
inline std::uint64_t no_tiling_footprint(const NetworkSpec& spec, int word_bits = 32) {
  detail::check_word_bits(word_bits);
  require(spec.bands >= 0 && spec.time_len >= 0 && spec.input_channels >= 0,
          "no_tiling_footprint: negative dimensions");
  if (!spec.conv.empty() || spec.fc.in > 0) spec.validate();
  std::uint64_t words = static_cast<std::uint64_t>(spec.bands) * spec.time_len * spec.input_channels;
  for (const auto& l : spec.conv)
    words += static_cast<std::uint64_t>(l.filters) * l.in_channels * l.kernel_len + l.filters;
  words += static_cast<std::uint64_t>(spec.fc.in) * spec.fc.out + spec.fc.out;
  return words * static_cast<std::uint64_t>(word_bits);
}

struct LayerTraffic {
  TilingConfig cfg;
  MemoryFootprint footprint;
  AccessTrace trace;
};

struct TrafficReport {
  std::vector<LayerTraffic> layers;
  AccessTrace total;
};

/// Schedule-only report for every conv layer of a spec.
inline TrafficReport traffic_report(const NetworkSpec& spec, const std::vector<TilingConfig>& cfgs,
                                    int word_bits = 32) {
  spec.validate();
  require(cfgs.size() == spec.conv.size(), "traffic_report: need one tiling config per conv layer (" +
                                               std::to_string(spec.conv.size()) + "), got " +
                                               std::to_string(cfgs.size()));
  const auto chain = spec.shape_chain();
  TrafficReport rep;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    LayerTraffic lt{cfgs[i], footprint(spec.conv[i], cfgs[i], word_bits),
                    simulate_traffic(spec.bands, chain[i].l, spec.conv[i], cfgs[i], word_bits)};
    rep.total += lt.trace;
    rep.layers.push_back(lt);
  }
  return rep;
}

/// Runs the conv stack through the tiled executor, returning the traffic
/// report and the flattened conv output.
template <typename T>
TrafficReport traffic_report(const NetworkSpec& spec, const WeightSet<T>& w, const Tensor3<T>& input,
                             const std::vector<TilingConfig>& cfgs, int word_bits = 32,
                             Tensor3<T>* conv_out = nullptr) {
  auto rep = traffic_report(spec, cfgs, word_bits);
  require(w.matches(spec), "traffic_report: weights do not match the spec");
  check_input(spec, input.n, input.l, input.c);
  Tensor3<T> x = input;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    AccessTrace tr;
    x = tiled_conv_forward(x, w.conv[i], cfgs[i], &tr, word_bits);
    relu_inplace(x);
    require(tr == rep.layers[i].trace, "traffic_report: executor and schedule disagree");
  }
  if (conv_out) *conv_out = std::move(x);
  return rep;
}

}  // namespace wss

#endif  // WSS_TILING_HPP
