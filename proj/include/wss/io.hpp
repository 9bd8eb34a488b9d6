#ifndef WSS_IO_HPP
#define WSS_IO_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wss/network.hpp"
#include "wss/omp.hpp"
#include "wss/quantization.hpp"
#include "wss/signal_model.hpp"
#include "wss/tiling.hpp"
#include "wss/training.hpp"

namespace wss {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// ---- scalars ---------------------------------------------------------------

/// JSON has no infinities; +-inf travel as the strings "inf" / "-inf".
inline json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    throw ValidationError("expected a number, got '" + s + "'");
  }
  require(j.is_number(), "expected a number");
  return j.get<double>();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("field '") + key + "': " + e.what());
  }
}

inline double real_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? real_from_json(j.at(key)) : fallback;
}

inline std::vector<double> real_list(const json& j) {
  require(j.is_array(), "expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(real_from_json(v));
  return out;
}

// ---- files -----------------------------------------------------------------

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline void write_f32_blob(const fs::path& path, const std::vector<float>& v) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Reads exactly `count` float32 values; a short or long file is an I/O error.
inline std::vector<float> read_f32_blob(const fs::path& path, std::size_t count) {
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw IoError("cannot open " + path.string());
  if (bytes != count * sizeof(float))
    throw IoError(path.string() + ": expected " + std::to_string(count * sizeof(float)) +
                  " bytes, found " + std::to_string(bytes) + (bytes < count * sizeof(float) ? " (truncated)" : ""));
  std::vector<float> v(count);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed for " + path.string());
  return v;
}

inline fs::path sibling(const fs::path& manifest, const std::string& name) {
  return manifest.parent_path() / name;
}

// ---- domain types ----------------------------------------------------------

inline json to_json(const Dimensions& d) { return {{"K", d.K}, {"N", d.N}, {"Q", d.Q}}; }

inline Dimensions dimensions_from_json(const json& j) {
  Dimensions d;
  d.K = get_or(j, "K", d.K);
  d.N = get_or(j, "N", d.N);
  d.Q = get_or(j, "Q", d.Q);
  d.validate();
  return d;
}

inline json to_json(const ChannelModel& c) {
  return {{"kind", to_string(c.kind)}, {"rician_k_factor", c.rician_k_factor}};
}

inline ChannelModel channel_from_json(const json& j) {
  ChannelModel c;
  if (j.is_string()) {
    c.kind = channel_kind_from_string(j.get<std::string>());
  } else {
    c.kind = channel_kind_from_string(get_or<std::string>(j, "kind", "awgn"));
    c.rician_k_factor = get_or(j, "rician_k_factor", c.rician_k_factor);
  }
  c.validate();
  return c;
}

inline json to_json(const DatasetSpec& s) {
  json grid = json::array();
  for (double v : s.snr_grid_db) grid.push_back(real_to_json(v));
  return {{"dims", to_json(s.dims)},     {"sparsity_min", s.sparsity_min},
          {"sparsity_max", s.sparsity_max}, {"snr_grid_db", grid},
          {"channel", to_json(s.channel)}, {"samples_per_cell", s.samples_per_cell},
          {"seed", s.seed},                {"matrix_seed", s.matrix_seed},
          {"keep_spectrum", s.keep_spectrum}};
}

inline DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "ess") s = ess_spec();
    else if (p == "hss") s = hss_spec();
    else throw ValidationError("unknown dataset preset '" + p + "'");
  }
  if (j.contains("dims")) s.dims = dimensions_from_json(j.at("dims"));
  s.sparsity_min = get_or(j, "sparsity_min", s.sparsity_min);
  s.sparsity_max = get_or(j, "sparsity_max", s.sparsity_max);
  if (j.contains("snr_grid_db")) s.snr_grid_db = real_list(j.at("snr_grid_db"));
  if (j.contains("channel")) s.channel = channel_from_json(j.at("channel"));
  s.samples_per_cell = get_or(j, "samples_per_cell", s.samples_per_cell);
  s.seed = get_or(j, "seed", s.seed);
  s.matrix_seed = get_or(j, "matrix_seed", s.matrix_seed);
  s.keep_spectrum = get_or(j, "keep_spectrum", s.keep_spectrum);
  s.validate();
  return s;
}

inline json to_json(const NetworkSpec& s) {
  json conv = json::array();
  for (const auto& l : s.conv)
    conv.push_back({{"filters", l.filters}, {"kernel_len", l.kernel_len}, {"in_channels", l.in_channels}});
  return {{"bands", s.bands}, {"time_len", s.time_len},  {"input_channels", s.input_channels},
          {"conv", conv},     {"fc", {{"in", s.fc.in}, {"out", s.fc.out}}}};
}

/// Accepts a preset name ("table2", "desk"), a {filters, kernels} shorthand,
/// or the full serialized form.
inline NetworkSpec network_spec_from_json(const json& j) {
  if (j.is_string()) {
    const auto p = j.get<std::string>();
    if (p == "table2") return NetworkSpec::table2();
    if (p == "desk") return NetworkSpec::desk();
    throw ValidationError("unknown network preset '" + p + "'");
  }
  if (j.contains("preset")) return network_spec_from_json(j.at("preset"));
  const int bands = get_or(j, "bands", 14);
  const int time_len = get_or(j, "time_len", 299);
  const int channels = get_or(j, "input_channels", 2);
  if (j.contains("filters"))
    return NetworkSpec::make(bands, time_len, channels, j.at("filters").get<std::vector<int>>(),
                             j.at("kernels").get<std::vector<int>>());
  NetworkSpec s{bands, time_len, channels, {}, {}};
  for (const auto& l : j.at("conv"))
    s.conv.push_back({l.at("filters").get<int>(), l.at("kernel_len").get<int>(), l.at("in_channels").get<int>()});
  s.fc = {j.at("fc").at("in").get<int>(), j.at("fc").at("out").get<int>()};
  s.validate();
  return s;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.epochs = get_or(j, "epochs", c.epochs);
  const auto opt = get_or<std::string>(j, "optimizer", "adam");
  if (opt == "adam" || opt == "Adam") c.optimizer = OptimizerKind::Adam;
  else if (opt == "sgd" || opt == "SGD") c.optimizer = OptimizerKind::SGD;
  else throw ValidationError("unknown optimizer '" + opt + "'");
  c.beta1 = get_or(j, "beta1", c.beta1);
  c.beta2 = get_or(j, "beta2", c.beta2);
  c.adam_epsilon = get_or(j, "adam_epsilon", c.adam_epsilon);
  c.seed = get_or(j, "seed", c.seed);
  c.prediction_threshold = get_or(j, "prediction_threshold", c.prediction_threshold);
  c.validate();
  return c;
}

inline TilingConfig tiling_from_json(const json& j) {
  TilingConfig c;
  if (j.is_array()) {
    const auto v = j.get<std::vector<int>>();
    require(v.size() == 4, "tiling config array must hold <To,Ti,Tr,Tc>");
    c = {v[0], v[1], v[2], v[3]};
  } else {
    c = {j.at("To").get<int>(), j.at("Ti").get<int>(), j.at("Tr").get<int>(), j.at("Tc").get<int>()};
  }
  c.validate();
  return c;
}

inline json to_json(const TilingConfig& c) { return {{"To", c.To}, {"Ti", c.Ti}, {"Tr", c.Tr}, {"Tc", c.Tc}}; }

inline FixedPointFormat format_from_json(const json& j) {
  FixedPointFormat f;
  if (j.is_array()) {
    const auto v = j.get<std::vector<int>>();
    require(v.size() == 2, "fixed-point format array must hold <W,I>");
    f = {v[0], v[1]};
  } else {
    f = {j.at("W").get<int>(), j.at("I").get<int>()};
  }
  f.validate();
  return f;
}

inline QuantizationPolicy policy_from_json(const json& j) {
  QuantizationPolicy p{format_from_json(j.at("activation")), format_from_json(j.at("weights"))};
  p.validate();
  return p;
}

inline json to_json(const EpsilonTable& t) {
  json entries = json::array();
  for (const auto& e : t.entries)
    entries.push_back({{"snr_db", real_to_json(e.snr_db)}, {"epsilon", e.epsilon}, {"per_sparsity", e.per_sparsity}});
  return {{"channel", to_json(t.channel)}, {"sparsity_min", t.sparsity_min}, {"entries", entries}};
}

inline EpsilonTable epsilon_table_from_json(const json& j) {
  EpsilonTable t;
  t.channel = channel_from_json(j.at("channel"));
  t.sparsity_min = get_or(j, "sparsity_min", 1);
  for (const auto& e : j.at("entries")) {
    EpsilonEntry x{real_from_json(e.at("snr_db")), real_from_json(e.at("epsilon")), {}};
    if (e.contains("per_sparsity")) x.per_sparsity = e.at("per_sparsity").get<std::vector<double>>();
    require(x.epsilon > 0.0, "EpsilonTable: epsilon must be > 0");
    t.entries.push_back(std::move(x));
  }
  require(!t.entries.empty(), "EpsilonTable: no entries");
  return t;
}

// ---- dataset files ---------------------------------------------------------

namespace detail {

inline void push_complex(std::vector<float>& out, const CMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out.push_back(static_cast<float>(m(r, c).real()));
      out.push_back(static_cast<float>(m(r, c).imag()));
    }
}

inline CMatrix pop_complex(const std::vector<float>& in, std::size_t& pos, int rows, int cols) {
  CMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      m(r, c) = {in[pos], in[pos + 1]};
      pos += 2;
    }
  return m;
}

}  // namespace detail

/// Writes `<stem>.json` and `<stem>.bin`. Blob layout: the K x N sensing
/// matrix, then per sample its K x Q capture and (if kept) its N x Q
/// spectrum; every matrix row-major, each entry as re, im float32.
inline void save_dataset(const Dataset& d, const fs::path& manifest_path) {
  const fs::path blob = fs::path(manifest_path).replace_extension(".bin");
  std::vector<float> data;
  detail::push_complex(data, d.matrix.entries);
  json samples = json::array();
  for (const auto& s : d.samples) {
    detail::push_complex(data, s.capture.samples);
    const bool has_x = s.spectrum.samples.size() > 0;
    if (has_x) detail::push_complex(data, s.spectrum.samples);
    samples.push_back({{"mask", s.mask.to_string()},
                       {"snr_db", real_to_json(s.capture.snr_db)},
                       {"spectrum", has_x}});
  }
  json m = {{"format", "wss-dataset"},
            {"version", 1},
            {"dims", to_json(d.spec.dims)},
            {"spec", to_json(d.spec)},
            {"seed", d.spec.seed},
            {"sample_count", d.samples.size()},
            {"dtype", "complex64"},
            {"layout", "row-major"},
            {"endianness", "little"},
            {"matrix_seed", d.matrix.seed},
            {"blob", blob.filename().string()},
            {"blob_values", data.size()},
            {"samples", samples}};
  write_f32_blob(blob, data);
  write_json_file(manifest_path, m);
}

inline Dataset load_dataset(const fs::path& manifest_path) {
  const json m = read_json_file(manifest_path);
  try {
    require(m.value("dtype", "") == "complex64", "dataset: unsupported dtype");
    require(m.value("layout", "") == "row-major", "dataset: unsupported layout");
    require(m.value("endianness", "") == "little", "dataset: unsupported endianness");
    Dataset d;
    d.spec = dataset_spec_from_json(m.at("spec"));
    const Dimensions dims = d.spec.dims;
    const auto values = m.at("blob_values").get<std::size_t>();
    const auto data = read_f32_blob(sibling(manifest_path, m.at("blob").get<std::string>()), values);
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > data.size()) throw IoError(manifest_path.string() + ": blob shorter than manifest describes");
    };
    need(2u * dims.K * dims.N);
    d.matrix.entries = detail::pop_complex(data, pos, dims.K, dims.N);
    d.matrix.seed = m.value("matrix_seed", d.spec.matrix_seed);
    const auto hash = d.matrix.digest();
    const auto& samples = m.at("samples");
    require(samples.size() == m.at("sample_count").get<std::size_t>(), "dataset: sample_count mismatch");
    for (const auto& js : samples) {
      Sample s;
      s.mask = OccupancyMask::from_string(js.at("mask").get<std::string>());
      require(s.mask.size() == dims.N, "dataset: mask length differs from N");
      need(2u * dims.K * dims.Q);
      s.capture.samples = detail::pop_complex(data, pos, dims.K, dims.Q);
      s.capture.snr_db = real_from_json(js.at("snr_db"));
      s.capture.channel = d.spec.channel;
      s.capture.matrix_hash = hash;
      if (js.value("spectrum", false)) {
        need(2u * dims.N * dims.Q);
        s.spectrum.samples = detail::pop_complex(data, pos, dims.N, dims.Q);
      }
      d.samples.push_back(std::move(s));
    }
    if (pos != data.size()) throw IoError(manifest_path.string() + ": blob longer than manifest describes");
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
}

// ---- weight files ----------------------------------------------------------

/// Writes `<stem>.json` and `<stem>.bin`; the blob holds every tensor in
/// WeightSet::for_each_tensor order as float32.
template <typename T>
void save_weights(const NetworkSpec& spec, const WeightSet<T>& w, const fs::path& manifest_path) {
  require(w.matches(spec), "save_weights: weights do not match the spec");
  const fs::path blob = fs::path(manifest_path).replace_extension(".bin");
  std::vector<float> data;
  json tensors = json::array();
  std::size_t layer = 0;
  bool kernel = true;
  w.for_each_tensor([&](const std::vector<T>& v) {
    const bool fc = layer >= spec.conv.size();
    const std::string name = (fc ? std::string("fc") : "cv" + std::to_string(layer + 1)) +
                             (kernel ? (fc ? ".weight" : ".kernel") : ".bias");
    tensors.push_back({{"name", name}, {"count", v.size()}});
    for (auto x : v) data.push_back(static_cast<float>(x));
    if (!kernel) ++layer;
    kernel = !kernel;
  });
  json m = {{"format", "wss-weights"},
            {"version", 1},
            {"spec", to_json(spec)},
            {"flatten_order", "band-major: ((n * L) + t) * F + f"},
            {"conv_kernel_layout", "[filter][in_channel][tap]"},
            {"fc_weight_layout", "[out][in]"},
            {"dtype", "float32"},
            {"endianness", "little"},
            {"tensors", tensors},
            {"parameter_count", data.size()},
            {"blob", blob.filename().string()}};
  write_f32_blob(blob, data);
  write_json_file(manifest_path, m);
}

struct LoadedWeights {
  NetworkSpec spec;
  WeightSet<float> weights;
};

/// Loads a weight file pair. When `expected` is given the stored spec must equal it.
inline LoadedWeights load_weights(const fs::path& manifest_path, const NetworkSpec* expected = nullptr) {
  const json m = read_json_file(manifest_path);
  try {
    require(m.value("dtype", "") == "float32", manifest_path.string() + ": unsupported dtype");
    require(m.value("endianness", "") == "little", manifest_path.string() + ": unsupported endianness");
    LoadedWeights out{network_spec_from_json(m.at("spec")), {}};
    if (expected && !(out.spec == *expected))
      throw ValidationError(manifest_path.string() + ": stored network spec does not match the requested spec");
    out.weights = WeightSet<float>::zeros(out.spec);
    const auto count = out.weights.parameter_count();
    if (m.at("parameter_count").get<std::size_t>() != count)
      throw ValidationError(manifest_path.string() + ": parameter_count does not match the spec");
    const auto data = read_f32_blob(sibling(manifest_path, m.at("blob").get<std::string>()), count);
    std::size_t pos = 0;
    out.weights.for_each_tensor([&](std::vector<float>& v) {
      std::copy(data.begin() + static_cast<std::ptrdiff_t>(pos),
                data.begin() + static_cast<std::ptrdiff_t>(pos + v.size()), v.begin());
      pos += v.size();
    });
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
}

// ---- reports ---------------------------------------------------------------

inline json to_json(const MemoryFootprint& f) {
  auto part = [](std::uint64_t bits) { return json{{"bits", bits}, {"Mib", MemoryFootprint::mib(bits)}}; };
  return {{"input", part(f.input_tile_bits)},
          {"weight", part(f.weight_tile_bits)},
          {"output", part(f.output_tile_bits)},
          {"total", part(f.total_bits)}};
}

inline json to_json(const TrafficReport& r) {
  json layers = json::array();
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& l = r.layers[i];
    layers.push_back({{"layer", "cv" + std::to_string(i + 1)},
                      {"cfg", to_json(l.cfg)},
                      {"footprint", to_json(l.footprint)},
                      {"ddr_reads_bits", l.trace.ddr_reads_bits},
                      {"ddr_writes_bits", l.trace.ddr_writes_bits},
                      {"tile_loads", l.trace.tile_loads},
                      {"mac_ops", l.trace.mac_ops}});
  }
  return {{"layers", layers},
          {"total",
           {{"ddr_reads_bits", r.total.ddr_reads_bits},
            {"ddr_writes_bits", r.total.ddr_writes_bits},
            {"tile_loads", r.total.tile_loads},
            {"mac_ops", r.total.mac_ops}}}};
}

inline json to_json(const RangeReport& r) {
  auto rows = [](const std::vector<RangeRow>& v) {
    json a = json::array();
    for (const auto& x : v)
      a.push_back({{"layer", x.layer}, {"type", x.type}, {"min", x.min}, {"max", x.max}, {"i_min", x.i_min}});
    return a;
  };
  return {{"layers", rows(r.rows)}, {"summary", rows(r.summary)}};
}

inline json to_json(const std::vector<SweepRow>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"Wa", r.policy.activation_format.W},
                 {"Ia", r.policy.activation_format.I},
                 {"Ww", r.policy.weight_format.W},
                 {"Iw", r.policy.weight_format.I},
                 {"pd_ob", r.pd_ob},
                 {"pd_ab", r.pd_ab},
                 {"saturation_events", r.saturation_events},
                 {"samples", r.samples}});
  return a;
}

}  // namespace wss

#endif  // WSS_IO_HPP
