#ifndef WSS_NETWORK_HPP
#define WSS_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "wss/core.hpp"
#include "wss/signal_model.hpp"
#include "wss/tensor.hpp"

namespace wss {

struct ConvLayerSpec {
  int filters = 1;
  int kernel_len = 1;
  int in_channels = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct FcSpec {
  int in = 0;
  int out = 0;
  friend bool operator==(const FcSpec&, const FcSpec&) = default;
};

struct Shape3 {
  int n = 0;
  int l = 0;
  int c = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Stack of valid 1-D convolutions along time (one band row at a time),
/// ReLU after each, then a flatten and one fully connected layer with a
/// sigmoid per band. Flatten order is band-major: index ((n * L) + t) * F + f.
struct NetworkSpec {
  int bands = 14;
  int time_len = 299;
  int input_channels = 2;
  std::vector<ConvLayerSpec> conv;
  FcSpec fc;

  static NetworkSpec make(int bands, int time_len, int input_channels,
                          const std::vector<int>& filters, const std::vector<int>& kernels) {
    require(filters.size() == kernels.size(), "NetworkSpec: filters/kernels length mismatch");
    NetworkSpec s{bands, time_len, input_channels, {}, {}};
    int channels = input_channels;
    int len = time_len;
    for (std::size_t i = 0; i < filters.size(); ++i) {
      s.conv.push_back({filters[i], kernels[i], channels});
      channels = filters[i];
      len = len - kernels[i] + 1;
    }
    s.fc = {bands * len * channels, bands};
    s.validate();
    return s;
  }

  /// The three-layer 256/128/64 network with kernels 150/100/51.
  static NetworkSpec table2() { return make(14, 299, 2, {256, 128, 64}, {150, 100, 51}); }

  /// Reduced filter counts (32/16/8) on the same kernels, for training on a CPU.
  static NetworkSpec desk() { return make(14, 299, 2, {32, 16, 8}, {150, 100, 51}); }

  /// Input shape followed by the output shape of every conv layer.
  std::vector<Shape3> shape_chain() const {
    std::vector<Shape3> chain{{bands, time_len, input_channels}};
    for (const auto& l : conv)
      chain.push_back({bands, chain.back().l - l.kernel_len + 1, l.filters});
    return chain;
  }

  int flatten_len() const {
    const auto last = shape_chain().back();
    return last.n * last.l * last.c;
  }

  void validate() const {
    require(bands >= 1 && time_len >= 1 && input_channels >= 1,
            "NetworkSpec: input dimensions must be positive");
    int channels = input_channels;
    int len = time_len;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const auto& l = conv[i];
      const std::string at = "NetworkSpec: conv layer " + std::to_string(i + 1);
      require(l.filters >= 1 && l.kernel_len >= 1, at + " needs positive filters and kernel");
      require(l.in_channels == channels, at + " in_channels must equal previous filters");
      require(l.kernel_len <= len, at + " kernel longer than incoming time length");
      channels = l.filters;
      len = len - l.kernel_len + 1;
    }
    require(fc.in == bands * len * channels, "NetworkSpec: fc.in must equal the flatten length");
    require(fc.out == bands, "NetworkSpec: fc.out must equal the band count");
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <typename T>
struct ConvWeights {
  int filters = 0;
  int in_channels = 0;
  int kernel_len = 0;
  std::vector<T> kernel;  // [f][c][tau]
  std::vector<T> bias;    // [f]

  std::size_t kidx(int f, int c, int tau) const {
    return (static_cast<std::size_t>(f) * in_channels + c) * kernel_len + tau;
  }
  T& k(int f, int c, int tau) { return kernel[kidx(f, c, tau)]; }
  T k(int f, int c, int tau) const { return kernel[kidx(f, c, tau)]; }
};

template <typename T>
struct FcWeights {
  int in = 0;
  int out = 0;
  std::vector<T> weight;  // [o][i]
  std::vector<T> bias;    // [o]
};

template <typename T>
struct WeightSet {
  std::vector<ConvWeights<T>> conv;
  FcWeights<T> fc;

  static WeightSet zeros(const NetworkSpec& spec) {
    WeightSet w;
    for (const auto& l : spec.conv) {
      ConvWeights<T> c{l.filters, l.in_channels, l.kernel_len, {}, {}};
      c.kernel.assign(static_cast<std::size_t>(l.filters) * l.in_channels * l.kernel_len, T{});
      c.bias.assign(static_cast<std::size_t>(l.filters), T{});
      w.conv.push_back(std::move(c));
    }
    w.fc = {spec.fc.in, spec.fc.out,
            std::vector<T>(static_cast<std::size_t>(spec.fc.in) * spec.fc.out, T{}),
            std::vector<T>(static_cast<std::size_t>(spec.fc.out), T{})};
    return w;
  }

  static WeightSet zeros_like(const WeightSet& o) {
    WeightSet w = o;
    w.for_each_tensor([](std::vector<T>& v) { std::fill(v.begin(), v.end(), T{}); });
    return w;
  }

  /// Every parameter vector in file order: conv kernels and biases by layer, then fc.
  template <typename F>
  void for_each_tensor(F&& fn) {
    for (auto& c : conv) {
      fn(c.kernel);
      fn(c.bias);
    }
    fn(fc.weight);
    fn(fc.bias);
  }
  template <typename F>
  void for_each_tensor(F&& fn) const {
    for (const auto& c : conv) {
      fn(c.kernel);
      fn(c.bias);
    }
    fn(fc.weight);
    fn(fc.bias);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::vector<T>& v) { n += v.size(); });
    return n;
  }

  bool matches(const NetworkSpec& spec) const {
    if (conv.size() != spec.conv.size()) return false;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const auto& l = spec.conv[i];
      const auto& c = conv[i];
      if (c.filters != l.filters || c.in_channels != l.in_channels ||
          c.kernel_len != l.kernel_len ||
          c.kernel.size() != static_cast<std::size_t>(l.filters) * l.in_channels * l.kernel_len ||
          c.bias.size() != static_cast<std::size_t>(l.filters))
        return false;
    }
    return fc.in == spec.fc.in && fc.out == spec.fc.out &&
           fc.weight.size() == static_cast<std::size_t>(fc.in) * fc.out &&
           fc.bias.size() == static_cast<std::size_t>(fc.out);
  }

  template <typename U>
  WeightSet<U> cast() const {
    WeightSet<U> w;
    auto conv_vec = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    for (const auto& c : conv)
      w.conv.push_back({c.filters, c.in_channels, c.kernel_len, conv_vec(c.kernel), conv_vec(c.bias)});
    w.fc = {fc.in, fc.out, conv_vec(fc.weight), conv_vec(fc.bias)};
    return w;
  }

  /// Glorot-uniform weights, zero biases.
  static WeightSet glorot(const NetworkSpec& spec, std::uint64_t seed) {
    WeightSet w = zeros(spec);
    Rng rng(derive_seed(seed, 0x1417));
    for (auto& c : w.conv) {
      const double fan_in = static_cast<double>(c.in_channels) * c.kernel_len;
      const double fan_out = static_cast<double>(c.filters) * c.kernel_len;
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : c.kernel) v = static_cast<T>(lim * u(rng));
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double lim = std::sqrt(6.0 / (static_cast<double>(w.fc.in) + w.fc.out));
    for (auto& v : w.fc.weight) v = static_cast<T>(lim * u(rng));
    return w;
  }

  friend bool operator==(const WeightSet& a, const WeightSet& b) {
    if (a.conv.size() != b.conv.size()) return false;
    for (std::size_t i = 0; i < a.conv.size(); ++i)
      if (a.conv[i].kernel != b.conv[i].kernel || a.conv[i].bias != b.conv[i].bias) return false;
    return a.fc.weight == b.fc.weight && a.fc.bias == b.fc.bias;
  }
};

namespace detail {

/// Kernel repacked as [c][tau][f] so the filter loop is contiguous.
template <typename T>
std::vector<T> pack_ctf(const ConvWeights<T>& w) {
  std::vector<T> p(w.kernel.size());
  for (int f = 0; f < w.filters; ++f)
    for (int c = 0; c < w.in_channels; ++c)
      for (int tau = 0; tau < w.kernel_len; ++tau)
        p[(static_cast<std::size_t>(c) * w.kernel_len + tau) * w.filters + f] = w.k(f, c, tau);
  return p;
}

/// Kernel repacked as [f][tau][c]: row f is the filter laid out like an input window.
template <typename T>
std::vector<T> pack_ftc(const ConvWeights<T>& w) {
  std::vector<T> p(w.kernel.size());
  for (int f = 0; f < w.filters; ++f)
    for (int c = 0; c < w.in_channels; ++c)
      for (int tau = 0; tau < w.kernel_len; ++tau)
        p[(static_cast<std::size_t>(f) * w.kernel_len + tau) * w.in_channels + c] = w.k(f, c, tau);
  return p;
}

}  // namespace detail

namespace detail {

#if defined(__AVX512F__)
template <typename T>
struct Avx512;

template <>
struct Avx512<float> {
  using reg = __m512;
  static constexpr int width = 16;
  static reg load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, reg v) { _mm512_storeu_ps(p, v); }
  static reg broadcast(float v) { return _mm512_set1_ps(v); }
  static reg fma(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
};

template <>
struct Avx512<double> {
  using reg = __m512d;
  static constexpr int width = 8;
  static reg load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, reg v) { _mm512_storeu_pd(p, v); }
  static reg broadcast(double v) { return _mm512_set1_pd(v); }
  static reg fma(reg a, reg b, reg c) { return _mm512_fmadd_pd(a, b, c); }
};

// Register-blocked tile: TB time steps x NV vectors of filters. Per output
// element the sequence of fused multiply-adds is the same as conv_scalar, and
// fma is exactly rounded, so blocking does not change results.
template <int TB, int NV, typename T>
inline void conv_tile_simd(const T* __restrict src, const T* __restrict packed,
                           const T* __restrict bias, T* __restrict dst, int t0, int f0, int nf,
                           int nc, int kt) {
  using V = Avx512<T>;
  typename V::reg acc[TB][NV];
  for (int j = 0; j < NV; ++j) {
    const auto b0 = V::load(bias + f0 + j * V::width);
    for (int b = 0; b < TB; ++b) acc[b][j] = b0;
  }
  for (int c = 0; c < nc; ++c) {
    const T* kc = packed + static_cast<std::size_t>(c) * kt * nf + f0;
    const T* xc = src + static_cast<std::size_t>(t0) * nc + c;
    for (int tau = 0; tau < kt; ++tau) {
      const T* kp = kc + static_cast<std::size_t>(tau) * nf;
      typename V::reg kv[NV];
      for (int j = 0; j < NV; ++j) kv[j] = V::load(kp + j * V::width);
      const T* xp = xc + static_cast<std::size_t>(tau) * nc;
      for (int b = 0; b < TB; ++b) {
        const auto v = V::broadcast(xp[static_cast<std::size_t>(b) * nc]);
        for (int j = 0; j < NV; ++j) acc[b][j] = V::fma(v, kv[j], acc[b][j]);
      }
    }
  }
  for (int b = 0; b < TB; ++b)
    for (int j = 0; j < NV; ++j)
      V::store(dst + static_cast<std::size_t>(t0 + b) * nf + f0 + j * V::width, acc[b][j]);
}
#endif

template <typename T>
inline void conv_scalar(const T* src, const T* packed, const T* bias, T* dst, int t, int f, int nf,
                        int nc, int kt) {
  T acc = bias[f];
  for (int c = 0; c < nc; ++c)
    for (int tau = 0; tau < kt; ++tau)
      acc = std::fma(src[static_cast<std::size_t>(t + tau) * nc + c],
                     packed[(static_cast<std::size_t>(c) * kt + tau) * nf + f], acc);
  dst[static_cast<std::size_t>(t) * nf + f] = acc;
}

}  // namespace detail

/// Valid correlation along time, independently per band row:
/// out[n, t, f] = bias[f] + sum_{c, tau} in[n, t + tau, c] * kernel[f, c, tau].
///
/// Accumulation order for every output element is fixed: start at the bias,
/// then input channels ascending, taps ascending within a channel, one fused
/// multiply-add per term. The tiled executor reproduces the same order.
template <typename T>
Tensor3<T> conv1d_forward(const Tensor3<T>& in, const ConvWeights<T>& w) {
  if (in.c != w.in_channels)
    throw ValidationError("conv1d_forward: input has " + std::to_string(in.c) +
                          " channels, layer expects " + std::to_string(w.in_channels));
  if (in.l < w.kernel_len)
    throw ValidationError("conv1d_forward: input length " + std::to_string(in.l) +
                          " shorter than kernel " + std::to_string(w.kernel_len));
  const int lout = in.l - w.kernel_len + 1;
  const int nf = w.filters;
  const int nc = w.in_channels;
  const int kt = w.kernel_len;
  Tensor3<T> out(in.n, lout, nf);
  const auto packed = detail::pack_ctf(w);
  const T* kp = packed.data();
  const T* bp = w.bias.data();
#if defined(__AVX512F__)
  constexpr int kW = detail::Avx512<T>::width;
  const int fwide = nf / (2 * kW) * (2 * kW);
  const int fdone = nf / kW * kW;
  for (int n = 0; n < in.n; ++n) {
    const T* src = in.row(n);
    T* dst = out.row(n);
    int t0 = 0;
    for (; t0 + 6 <= lout; t0 += 6)
      for (int f0 = 0; f0 < fwide; f0 += 2 * kW)
        detail::conv_tile_simd<6, 2>(src, kp, bp, dst, t0, f0, nf, nc, kt);
    for (; t0 < lout; ++t0)
      for (int f0 = 0; f0 < fwide; f0 += 2 * kW)
        detail::conv_tile_simd<1, 2>(src, kp, bp, dst, t0, f0, nf, nc, kt);
    if (fdone > fwide) {
      t0 = 0;
      for (; t0 + 12 <= lout; t0 += 12)
        detail::conv_tile_simd<12, 1>(src, kp, bp, dst, t0, fwide, nf, nc, kt);
      for (; t0 < lout; ++t0) detail::conv_tile_simd<1, 1>(src, kp, bp, dst, t0, fwide, nf, nc, kt);
    }
    for (int t = 0; t < lout; ++t)
      for (int f = fdone; f < nf; ++f) detail::conv_scalar(src, kp, bp, dst, t, f, nf, nc, kt);
  }
#else
  for (int n = 0; n < in.n; ++n) {
    const T* src = in.row(n);
    T* dst = out.row(n);
    for (int t = 0; t < lout; ++t)
      for (int f = 0; f < nf; ++f) detail::conv_scalar(src, kp, bp, dst, t, f, nf, nc, kt);
  }
#endif
  return out;
}

template <typename T>
T relu(T x) {
  return x > T{} ? x : T{};
}

template <typename T>
void relu_inplace(Tensor3<T>& t) {
  for (auto& v : t.data) v = relu(v);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
std::vector<T> fc_forward(const std::vector<T>& x, const FcWeights<T>& w) {
  require(static_cast<int>(x.size()) == w.in, "fc_forward: input length mismatch");
  std::vector<T> y(w.bias);
  for (int o = 0; o < w.out; ++o) {
    const T* row = w.weight.data() + static_cast<std::size_t>(o) * w.in;
    T acc = y[static_cast<std::size_t>(o)];
    for (int i = 0; i < w.in; ++i) acc = std::fma(row[i], x[static_cast<std::size_t>(i)], acc);
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

/// Cached intermediates of one forward pass.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor3<T>> pre;   // conv outputs before ReLU
  std::vector<Tensor3<T>> post;  // after ReLU
  std::vector<T> logits;
  std::vector<T> probs;
};

inline void check_input(const NetworkSpec& spec, int n, int l, int c) {
  if (n != spec.bands || l != spec.time_len || c != spec.input_channels)
    throw ValidationError("network input is " + std::to_string(n) + "x" + std::to_string(l) +
                          "x" + std::to_string(c) + ", spec expects " +
                          std::to_string(spec.bands) + "x" + std::to_string(spec.time_len) + "x" +
                          std::to_string(spec.input_channels));
}

template <typename T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const WeightSet<T>& w,
                              const Tensor3<T>& input) {
  check_input(spec, input.n, input.l, input.c);
  require(w.matches(spec), "forward: weights do not match the network spec");
  ForwardTrace<T> tr;
  const Tensor3<T>* cur = &input;
  for (std::size_t i = 0; i < w.conv.size(); ++i) {
    tr.pre.push_back(conv1d_forward(*cur, w.conv[i]));
    tr.post.push_back(tr.pre.back());
    relu_inplace(tr.post.back());
    cur = &tr.post.back();
  }
  tr.logits = fc_forward(cur->data, w.fc);
  tr.probs.resize(tr.logits.size());
  std::transform(tr.logits.begin(), tr.logits.end(), tr.probs.begin(), sigmoid<T>);
  return tr;
}

/// Per-band occupancy probabilities.
template <typename T>
std::vector<T> forward(const NetworkSpec& spec, const WeightSet<T>& w, const Tensor3<T>& input) {
  return forward_trace(spec, w, input).probs;
}

template <typename T>
OccupancyMask predict_occupancy(const std::vector<T>& probs, double threshold = 0.5) {
  require(threshold > 0.0 && threshold < 1.0, "predict_occupancy: threshold must lie in (0, 1)");
  OccupancyMask m(static_cast<int>(probs.size()));
  for (std::size_t i = 0; i < probs.size(); ++i)
    m.bits[i] = static_cast<double>(probs[i]) >= threshold;
  return m;
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy over bands, probabilities clamped to [1e-7, 1 - 1e-7].
template <typename T>
double bce_loss(const std::vector<T>& probs, const OccupancyMask& mask) {
  require(static_cast<int>(probs.size()) == mask.size(), "bce_loss: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), kProbClamp, 1.0 - kProbClamp);
    sum -= mask.bits[i] ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows are overlapping input windows: row t covers in[t .. t + T - 1][0 .. C - 1].
template <typename T>
auto window_map(const T* band, int lout, int kt, int nc) {
  return Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>(
      band, lout, static_cast<Eigen::Index>(kt) * nc, Eigen::OuterStride<>(nc));
}

/// Gradients of one conv layer. grad_kernel_ftc is accumulated in the
/// [f][tau][c] packing; grad_in is skipped when null.
template <typename T>
void conv1d_backward(const Tensor3<T>& in, const ConvWeights<T>& w, const std::vector<T>& ftc,
                     const Tensor3<T>& grad_out, RowMat<T>& grad_kernel_ftc, std::vector<T>& grad_bias,
                     Tensor3<T>* grad_in) {
  const int lout = grad_out.l;
  const int nf = w.filters;
  const int nc = w.in_channels;
  const int kt = w.kernel_len;
  const Eigen::Map<const RowMat<T>> kmat(ftc.data(), nf, static_cast<Eigen::Index>(kt) * nc);
  RowMat<T> dwin;
  for (int n = 0; n < in.n; ++n) {
    const Eigen::Map<const RowMat<T>> dout(grad_out.row(n), lout, nf);
    const auto win = window_map(in.row(n), lout, kt, nc);
    grad_kernel_ftc.noalias() += dout.transpose() * win;
    for (int t = 0; t < lout; ++t)
      for (int f = 0; f < nf; ++f) grad_bias[static_cast<std::size_t>(f)] += dout(t, f);
    if (grad_in) {
      dwin.noalias() = dout * kmat;
      T* dst = grad_in->row(n);
      const Eigen::Index width = static_cast<Eigen::Index>(kt) * nc;
      for (int t = 0; t < lout; ++t) {
        T* d = dst + static_cast<std::size_t>(t) * nc;
        const T* s = dwin.data() + static_cast<std::size_t>(t) * width;
        for (Eigen::Index j = 0; j < width; ++j) d[j] += s[j];
      }
    }
  }
}

}  // namespace detail

/// Accumulates gradients of bce_loss into grad (scaled by `weight`) for one
/// sample and returns the sample loss. `ftc` holds each layer's kernel in the
/// [f][tau][c] packing, as produced by pack_ftc.
template <typename T>
double accumulate_gradient(const NetworkSpec& spec, const WeightSet<T>& w,
                           const std::vector<std::vector<T>>& ftc, const Tensor3<T>& input,
                           const OccupancyMask& mask, T weight, WeightSet<T>& grad) {
  require(mask.size() == spec.bands, "backward: mask length must equal the band count");
  const auto tr = forward_trace(spec, w, input);
  const double loss = bce_loss(tr.probs, mask);
  const std::size_t nb = tr.probs.size();

  // d loss / d logit, exact including the clamp (zero where the clamp is active).
  std::vector<T> dlogit(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    const double p = static_cast<double>(tr.probs[i]);
    const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
    const double y = mask.bits[i] ? 1.0 : 0.0;
    dlogit[i] = clamped ? T{} : static_cast<T>((p - y) / static_cast<double>(nb)) * weight;
  }

  const auto& flat = w.conv.empty() ? input.data : tr.post.back().data;
  const int fin = w.fc.in;
  std::vector<T> dflat(static_cast<std::size_t>(fin), T{});
  for (int o = 0; o < w.fc.out; ++o) {
    const T g = dlogit[static_cast<std::size_t>(o)];
    grad.fc.bias[static_cast<std::size_t>(o)] += g;
    if (g == T{}) continue;
    T* gw = grad.fc.weight.data() + static_cast<std::size_t>(o) * fin;
    const T* wr = w.fc.weight.data() + static_cast<std::size_t>(o) * fin;
    for (int i = 0; i < fin; ++i) {
      gw[i] += g * flat[static_cast<std::size_t>(i)];
      dflat[static_cast<std::size_t>(i)] += g * wr[i];
    }
  }
  if (w.conv.empty()) return loss;

  Tensor3<T> gout = tr.post.back();
  gout.data = std::move(dflat);
  for (std::size_t li = w.conv.size(); li-- > 0;) {
    const auto& pre = tr.pre[li];
    for (std::size_t j = 0; j < gout.data.size(); ++j)
      if (!(pre.data[j] > T{})) gout.data[j] = T{};
    const Tensor3<T>& layer_in = li == 0 ? input : tr.post[li - 1];
    const auto& cw = w.conv[li];
    detail::RowMat<T> gk = detail::RowMat<T>::Zero(cw.filters, static_cast<Eigen::Index>(cw.kernel_len) * cw.in_channels);
    Tensor3<T> gin;
    if (li > 0) gin = Tensor3<T>(layer_in.n, layer_in.l, layer_in.c);
    detail::conv1d_backward(layer_in, cw, ftc[li], gout, gk, grad.conv[li].bias, li > 0 ? &gin : nullptr);
    for (int f = 0; f < cw.filters; ++f)
      for (int c = 0; c < cw.in_channels; ++c)
        for (int tau = 0; tau < cw.kernel_len; ++tau)
          grad.conv[li].k(f, c, tau) += gk(f, static_cast<Eigen::Index>(tau) * cw.in_channels + c);
    if (li > 0) gout = std::move(gin);
  }
  return loss;
}

template <typename T>
std::vector<std::vector<T>> pack_all_ftc(const WeightSet<T>& w) {
  std::vector<std::vector<T>> out;
  for (const auto& c : w.conv) out.push_back(detail::pack_ftc(c));
  return out;
}

/// Exact gradients of the mean batch loss with respect to every parameter.
template <typename T>
WeightSet<T> backward(const NetworkSpec& spec, const WeightSet<T>& w,
                      const std::vector<Tensor3<T>>& inputs,
                      const std::vector<OccupancyMask>& masks) {
  require(!inputs.empty() && inputs.size() == masks.size(), "backward: batch size mismatch");
  WeightSet<T> grad = WeightSet<T>::zeros(spec);
  const auto ftc = pack_all_ftc(w);
  const T scale = T{1} / static_cast<T>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    accumulate_gradient(spec, w, ftc, inputs[i], masks[i], scale, grad);
  return grad;
}

template <typename T>
WeightSet<T> backward(const NetworkSpec& spec, const WeightSet<T>& w, const Tensor3<T>& input,
                      const OccupancyMask& mask) {
  return backward(spec, w, std::vector<Tensor3<T>>{input}, std::vector<OccupancyMask>{mask});
}

}  // namespace wss

#endif  // WSS_NETWORK_HPP
