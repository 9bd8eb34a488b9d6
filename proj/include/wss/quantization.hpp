#ifndef WSS_QUANTIZATION_HPP
#define WSS_QUANTIZATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "wss/metrics.hpp"
#include "wss/network.hpp"

namespace wss {

/// <W, I> fixed point: W bits in total, I of them (sign included) integer.
struct FixedPointFormat {
  int W = 32;
  int I = 16;

  void validate() const {
    require(I >= 1 && I <= W && W <= 64, "FixedPointFormat: need 1 <= I <= W <= 64, got <" +
                                             std::to_string(W) + "," + std::to_string(I) + ">");
  }
  double step() const { return std::ldexp(1.0, I - W); }
  double lowest() const { return -std::ldexp(1.0, I - 1); }
  double highest() const { return std::ldexp(1.0, I - 1) - step(); }

  friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;
};

struct QuantStats {
  std::uint64_t values = 0;
  std::uint64_t saturations = 0;

  QuantStats& operator+=(const QuantStats& o) {
    values += o.values;
    saturations += o.saturations;
    return *this;
  }
};

/// Round to nearest (ties to even) on the format's grid, then saturate.
inline double quantize(double x, const FixedPointFormat& fmt, QuantStats* stats = nullptr) {
  const double step = fmt.step();
  double q = std::nearbyint(x / step) * step;
  const double hi = fmt.highest();
  const double lo = fmt.lowest();
  bool sat = false;
  if (q > hi) {
    q = hi;
    sat = true;
  } else if (q < lo) {
    q = lo;
    sat = true;
  }
  if (stats) {
    ++stats->values;
    stats->saturations += sat;
  }
  return q;
}

template <typename T>
void quantize_inplace(std::vector<T>& v, const FixedPointFormat& fmt, QuantStats* stats = nullptr) {
  for (auto& x : v) x = static_cast<T>(quantize(static_cast<double>(x), fmt, stats));
}

/// Smallest sign-inclusive integer width covering [min, max]:
/// ceil(log2(max(|min|, |max|) + 1)) + 1.
inline int min_integer_bits(double min, double max) {
  require(min <= max, "min_integer_bits: min must not exceed max");
  const double mag = std::max(std::abs(min), std::abs(max));
  return static_cast<int>(std::ceil(std::log2(mag + 1.0))) + 1;
}

struct RangeRow {
  std::string layer;  // "input", "cv1".., "fc"
  std::string type;   // "activation" or "weight"
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  int i_min = 1;

  void update(double v) {
    min = std::min(min, v);
    max = std::max(max, v);
  }
  void finish() {
    if (min > max) min = max = 0.0;
    i_min = min_integer_bits(min, max);
  }
};

struct RangeReport {
  std::vector<RangeRow> rows;     // per layer
  std::vector<RangeRow> summary;  // activation/weight x CV/FC

  const RangeRow& find(const std::string& layer, const std::string& type) const {
    for (const auto& r : rows)
      if (r.layer == layer && r.type == type) return r;
    for (const auto& r : summary)
      if (r.layer == layer && r.type == type) return r;
    throw ValidationError("RangeReport: no row " + layer + "/" + type);
  }

  /// Integer width covering every activation (input and pre-activation outputs).
  int activation_i_min() const {
    int i = 1;
    for (const auto& r : rows)
      if (r.type == "activation") i = std::max(i, r.i_min);
    return i;
  }
  int weight_i_min() const {
    int i = 1;
    for (const auto& r : rows)
      if (r.type == "weight") i = std::max(i, r.i_min);
    return i;
  }
};

/// Exact min/max of the network input, every pre-activation output, and
/// every weight tensor (biases included) over the given samples.
template <typename T>
RangeReport analyze_dynamic_range(const NetworkSpec& spec, const WeightSet<T>& w,
                                  const std::vector<Tensor3<T>>& inputs) {
  require(!inputs.empty(), "analyze_dynamic_range: dataset is empty");
  require(w.matches(spec), "analyze_dynamic_range: weights do not match the spec");
  const std::size_t nconv = spec.conv.size();
  std::vector<RangeRow> act(nconv + 2);
  act[0] = {"input", "activation"};
  for (std::size_t i = 0; i < nconv; ++i) act[i + 1] = {"cv" + std::to_string(i + 1), "activation"};
  act[nconv + 1] = {"fc", "activation"};
  for (const auto& x : inputs) {
    const auto tr = forward_trace(spec, w, x);
    for (auto v : x.data) act[0].update(static_cast<double>(v));
    for (std::size_t i = 0; i < nconv; ++i)
      for (auto v : tr.pre[i].data) act[i + 1].update(static_cast<double>(v));
    for (auto v : tr.logits) act[nconv + 1].update(static_cast<double>(v));
  }
  RangeReport rep;
  for (auto& r : act) {
    r.finish();
    rep.rows.push_back(r);
  }
  for (std::size_t i = 0; i < nconv; ++i) {
    RangeRow r{"cv" + std::to_string(i + 1), "weight"};
    for (auto v : w.conv[i].kernel) r.update(static_cast<double>(v));
    for (auto v : w.conv[i].bias) r.update(static_cast<double>(v));
    r.finish();
    rep.rows.push_back(r);
  }
  RangeRow fcw{"fc", "weight"};
  for (auto v : w.fc.weight) fcw.update(static_cast<double>(v));
  for (auto v : w.fc.bias) fcw.update(static_cast<double>(v));
  fcw.finish();
  rep.rows.push_back(fcw);

  RangeRow acv{"CV", "activation"}, afc{"FC", "activation"}, wcv{"CV", "weight"}, wfc{"FC", "weight"};
  for (const auto& r : rep.rows) {
    if (r.layer == "input") continue;
    RangeRow* dst = r.type == "activation" ? (r.layer == "fc" ? &afc : &acv)
                                           : (r.layer == "fc" ? &wfc : &wcv);
    if (std::isfinite(r.min)) dst->update(r.min);
    if (std::isfinite(r.max)) dst->update(r.max);
  }
  for (RangeRow* r : {&acv, &afc, &wcv, &wfc}) {
    if (nconv == 0 && r->layer == "CV") continue;
    r->finish();
    rep.summary.push_back(*r);
  }
  return rep;
}

struct QuantizationPolicy {
  FixedPointFormat activation_format{32, 16};
  FixedPointFormat weight_format{32, 16};

  void validate() const {
    activation_format.validate();
    weight_format.validate();
  }
};

struct QuantizedOutput {
  std::vector<double> probs;
  QuantStats weight_stats;
  QuantStats activation_stats;
};

template <typename T>
WeightSet<double> quantize_weights(const WeightSet<T>& w, const FixedPointFormat& fmt,
                                   QuantStats* stats = nullptr) {
  auto q = w.template cast<double>();
  q.for_each_tensor([&](std::vector<double>& v) { quantize_inplace(v, fmt, stats); });
  return q;
}

/// Fixed-point emulation of inference with weights already quantized.
/// Layer inputs and pre-activation outputs are stored in the activation
/// format; accumulation inside a layer is full double precision. The
/// sigmoid runs in full precision on the quantized logits.
template <typename T>
QuantizedOutput quantized_forward_prequantized(const NetworkSpec& spec, const WeightSet<double>& wq,
                                               const Tensor3<T>& input,
                                               const FixedPointFormat& act) {
  check_input(spec, input.n, input.l, input.c);
  QuantizedOutput out;
  Tensor3<double> x = input.template cast<double>();
  quantize_inplace(x.data, act, &out.activation_stats);
  for (const auto& layer : wq.conv) {
    x = conv1d_forward(x, layer);
    quantize_inplace(x.data, act, &out.activation_stats);
    relu_inplace(x);
  }
  auto logits = fc_forward(x.data, wq.fc);
  quantize_inplace(logits, act, &out.activation_stats);
  out.probs.resize(logits.size());
  std::transform(logits.begin(), logits.end(), out.probs.begin(), sigmoid<double>);
  return out;
}

template <typename T>
QuantizedOutput quantized_forward(const NetworkSpec& spec, const WeightSet<T>& w,
                                  const Tensor3<T>& input, const QuantizationPolicy& policy) {
  policy.validate();
  require(w.matches(spec), "quantized_forward: weights do not match the spec");
  QuantStats ws;
  const auto wq = quantize_weights(w, policy.weight_format, &ws);
  auto out = quantized_forward_prequantized(spec, wq, input, policy.activation_format);
  out.weight_stats = ws;
  return out;
}

struct SweepRow {
  QuantizationPolicy policy;
  double pd_ob = 0.0;
  double pd_ab = 0.0;
  std::uint64_t saturation_events = 0;
  std::size_t samples = 0;
};

/// Evaluates every policy on the same labeled samples.
template <typename T>
std::vector<SweepRow> wl_sweep(const NetworkSpec& spec, const WeightSet<T>& w,
                               const std::vector<Tensor3<T>>& inputs,
                               const std::vector<OccupancyMask>& labels,
                               const std::vector<QuantizationPolicy>& policies,
                               double threshold = 0.5) {
  require(!policies.empty(), "wl_sweep: at least one policy is required");
  require(inputs.size() == labels.size() && !inputs.empty(), "wl_sweep: bad dataset");
  std::vector<SweepRow> rows;
  for (const auto& p : policies) {
    p.validate();
    QuantStats ws;
    const auto wq = quantize_weights(w, p.weight_format, &ws);
    std::vector<OccupancyMask> preds;
    preds.reserve(inputs.size());
    std::uint64_t sat = ws.saturations;
    for (const auto& x : inputs) {
      const auto q = quantized_forward_prequantized(spec, wq, x, p.activation_format);
      sat += q.activation_stats.saturations;
      preds.push_back(predict_occupancy(q.probs, threshold));
    }
    const auto m = evaluate(preds, labels);
    rows.push_back({p, m.pd_occupied_bands, m.pd_all_bands, sat, inputs.size()});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "Wa,Ia,Ww,Iw,pd_ob,pd_ab,saturation_events,samples\n";
  for (const auto& r : rows)
    os << r.policy.activation_format.W << ',' << r.policy.activation_format.I << ','
       << r.policy.weight_format.W << ',' << r.policy.weight_format.I << ',' << r.pd_ob << ','
       << r.pd_ab << ',' << r.saturation_events << ',' << r.samples << '\n';
}

}  // namespace wss

#endif  // WSS_QUANTIZATION_HPP
