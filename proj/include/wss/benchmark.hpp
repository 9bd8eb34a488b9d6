#ifndef WSS_BENCHMARK_HPP
#define WSS_BENCHMARK_HPP

#include <chrono>
#include <ctime>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wss/complexity.hpp"
#include "wss/io.hpp"
#include "wss/metrics.hpp"
#include "wss/omp.hpp"
#include "wss/pipeline.hpp"
#include "wss/quantization.hpp"

namespace wss {

enum class Method { OmpKnown, OmpEpsilon, Dlwss, DlwssQuantized };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::OmpKnown: return "omp_known";
    case Method::OmpEpsilon: return "omp_eps";
    case Method::Dlwss: return "dlwss";
    case Method::DlwssQuantized: return "dlwss_quant";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "omp_known") return Method::OmpKnown;
  if (s == "omp_eps") return Method::OmpEpsilon;
  if (s == "dlwss") return Method::Dlwss;
  if (s == "dlwss_quant") return Method::DlwssQuantized;
  throw ValidationError("unknown method '" + s + "'");
}

inline bool sparsity_known(Method m) { return m == Method::OmpKnown; }

struct BenchmarkConfig {
  std::vector<Method> methods;
  double threshold = 0.5;
  std::optional<QuantizationPolicy> quantization;
  std::uint64_t seed = 1;

  void validate() const {
    require(!methods.empty(), "BenchmarkConfig: method list is empty");
    require(threshold > 0.0 && threshold < 1.0, "BenchmarkConfig: threshold must lie in (0, 1)");
    for (auto m : methods)
      if (m == Method::DlwssQuantized)
        require(quantization.has_value(), "BenchmarkConfig: dlwss_quant needs a quantization policy");
    if (quantization) quantization->validate();
  }
};

struct NamedDataset {
  std::string name;
  const Dataset* data = nullptr;
};

/// Everything a benchmark may need beyond the datasets; unused parts may be null.
struct BenchmarkModels {
  const NetworkSpec* spec = nullptr;
  const WeightSet<float>* weights = nullptr;
  const EpsilonTable* epsilon = nullptr;
};

struct BenchmarkCell {
  std::string dataset;
  std::string channel;
  Method method = Method::OmpKnown;
  double snr_db = 0.0;
  Metrics metrics;
  std::uint64_t dataset_digest = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;
  std::uint64_t seed = 0;
  json config_echo;
  std::string started_at;
  std::string finished_at;
  OmpOpCount omp_ops;
  std::optional<DlwssOpCount> dlwss_ops;

  const BenchmarkCell& find(const std::string& dataset, Method m, double snr) const {
    for (const auto& c : cells)
      if (c.dataset == dataset && c.method == m && c.snr_db == snr) return c;
    throw ValidationError("BenchmarkReport: no cell " + dataset + "/" + to_string(m));
  }
};

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Predictions of one method for every sample of a dataset.
inline std::vector<OccupancyMask> predict_all(const Dataset& d, Method m, const BenchmarkConfig& cfg,
                                              const BenchmarkModels& models) {
  std::vector<OccupancyMask> preds;
  preds.reserve(d.samples.size());
  const int n = d.spec.dims.N;
  if (m == Method::OmpKnown || m == Method::OmpEpsilon) {
    if (m == Method::OmpEpsilon) require(models.epsilon, "benchmark: omp_eps needs an epsilon table");
    const CMatrix a = d.matrix.entries;
    for (const auto& s : d.samples) {
      const int sparsity = s.mask.popcount();
      if (m == Method::OmpKnown && sparsity == 0) {
        preds.emplace_back(n);
        continue;
      }
      const auto oc = m == Method::OmpKnown
                          ? OmpConfig::known_sparsity(sparsity)
                          : OmpConfig::residual_threshold(models.epsilon->epsilon_for(s.capture.snr_db));
      preds.push_back(omp_recover(a, s.capture.samples, oc).mask(n));
    }
    return preds;
  }
  require(models.spec && models.weights, "benchmark: " + to_string(m) + " needs a network and weights");
  require(models.weights->matches(*models.spec), "benchmark: weights do not match the network spec");
  check_input(*models.spec, d.spec.dims.N, d.spec.dims.Q, 2);
  const auto ad = pseudo_inverse_lu(d.matrix);
  std::optional<WeightSet<double>> wq;
  if (m == Method::DlwssQuantized) wq = quantize_weights(*models.weights, cfg.quantization->weight_format);
  for (const auto& s : d.samples) {
    const auto x = network_input<float>(ad, s.capture);
    if (wq) {
      const auto q = quantized_forward_prequantized(*models.spec, *wq, x, cfg.quantization->activation_format);
      preds.push_back(predict_occupancy(q.probs, cfg.threshold));
    } else {
      preds.push_back(predict_occupancy(forward(*models.spec, *models.weights, x), cfg.threshold));
    }
  }
  return preds;
}

/// Evaluates every method on every (dataset, SNR) cell. Sample order within
/// a cell follows the dataset, so the report is reproducible.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const std::vector<NamedDataset>& datasets,
                                     const BenchmarkModels& models) {
  cfg.validate();
  require(!datasets.empty(), "benchmark: no datasets");
  BenchmarkReport rep;
  rep.started_at = detail::utc_now();
  rep.seed = cfg.seed;
  for (const auto& nd : datasets) {
    require(nd.data != nullptr, "benchmark: null dataset '" + nd.name + "'");
    const Dataset& d = *nd.data;
    const auto digest = dataset_digest(d);
    for (auto m : cfg.methods) {
      const auto preds = predict_all(d, m, cfg, models);
      std::map<double, std::pair<std::vector<OccupancyMask>, std::vector<OccupancyMask>>> by_snr;
      for (std::size_t i = 0; i < d.samples.size(); ++i) {
        auto& cell = by_snr[d.samples[i].capture.snr_db];
        cell.first.push_back(preds[i]);
        cell.second.push_back(d.samples[i].mask);
      }
      for (const auto& [snr, pt] : by_snr) {
        BenchmarkCell c{nd.name, to_string(d.spec.channel.kind), m, snr, {}, digest};
        c.metrics.pd_all_bands = pd_all_bands(pt.first, pt.second);
        bool any_occupied = false;
        for (const auto& t : pt.second) any_occupied |= t.popcount() > 0;
        c.metrics.pd_occupied_bands = any_occupied ? pd_occupied_bands(pt.first, pt.second) : 100.0;
        c.metrics.sample_count = pt.first.size();
        rep.cells.push_back(c);
      }
    }
  }
  const auto& first = datasets.front().data->spec;
  rep.omp_ops = omp_op_count({first.dims.K, first.dims.N, first.dims.Q, std::min(first.sparsity_max, first.dims.K)});
  if (models.spec) rep.dlwss_ops = dlwss_op_count(*models.spec);
  rep.finished_at = detail::utc_now();
  return rep;
}

inline void write_benchmark_csv(std::ostream& os, const BenchmarkReport& r) {
  os << "dataset,channel,method,sparsity_known,snr_db,pd_ab,pd_ob,samples,dataset_digest,seed\n";
  for (const auto& c : r.cells)
    os << c.dataset << ',' << c.channel << ',' << to_string(c.method) << ','
       << (sparsity_known(c.method) ? "true" : "false") << ',' << c.snr_db << ',' << c.metrics.pd_all_bands
       << ',' << c.metrics.pd_occupied_bands << ',' << c.metrics.sample_count << ',' << c.dataset_digest << ','
       << r.seed << '\n';
}

inline json to_json(const BenchmarkReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"dataset", c.dataset},
                     {"channel", c.channel},
                     {"method", to_string(c.method)},
                     {"sparsity_known", sparsity_known(c.method)},
                     {"snr_db", real_to_json(c.snr_db)},
                     {"pd_ab", c.metrics.pd_all_bands},
                     {"pd_ob", c.metrics.pd_occupied_bands},
                     {"samples", c.metrics.sample_count},
                     {"dataset_digest", c.dataset_digest}});
  json ops = {{"omp",
               {{"matching", r.omp_ops.matching},
                {"identification", r.omp_ops.identification},
                {"least_squares", r.omp_ops.least_squares},
                {"approximation", r.omp_ops.approximation},
                {"total", r.omp_ops.total()}}}};
  if (r.dlwss_ops) ops["dlwss"] = {{"conv", r.dlwss_ops->conv}, {"fc", r.dlwss_ops->fc}, {"total", r.dlwss_ops->total()}};
  return {{"cells", cells},  {"seed", r.seed},          {"config", r.config_echo},
          {"op_counts", ops}, {"started_at", r.started_at}, {"finished_at", r.finished_at}};
}

/// Config-file driven run. Relative paths resolve against the config's
/// directory. Keys: methods, datasets [{name, path | spec}], weights,
/// network, epsilon (path or {calibrate: {...}}), threshold, quantization.
inline BenchmarkReport run_benchmark(const fs::path& config_path, std::optional<std::uint64_t> seed = {}) {
  const json j = read_json_file(config_path);
  const fs::path base = config_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    BenchmarkConfig cfg;
    for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_string(m.get<std::string>()));
    cfg.threshold = get_or(j, "threshold", cfg.threshold);
    cfg.seed = seed.value_or(get_or<std::uint64_t>(j, "seed", cfg.seed));
    if (j.contains("quantization")) cfg.quantization = policy_from_json(j.at("quantization"));
    cfg.validate();

    std::vector<Dataset> store;
    std::vector<std::string> names;
    for (const auto& jd : j.at("datasets")) {
      names.push_back(jd.at("name").get<std::string>());
      if (jd.contains("path")) {
        store.push_back(load_dataset(resolve(jd.at("path").get<std::string>())));
      } else {
        auto spec = dataset_spec_from_json(jd.at("spec"));
        if (seed) spec.seed = derive_seed(*seed, store.size());
        store.push_back(generate_dataset(spec));
      }
    }
    std::vector<NamedDataset> named;
    for (std::size_t i = 0; i < store.size(); ++i) named.push_back({names[i], &store[i]});

    BenchmarkModels models;
    std::optional<LoadedWeights> lw;
    std::optional<NetworkSpec> spec;
    if (j.contains("network")) spec = network_spec_from_json(j.at("network"));
    if (j.contains("weights")) {
      lw = load_weights(resolve(j.at("weights").get<std::string>()), spec ? &*spec : nullptr);
      models.spec = &lw->spec;
      models.weights = &lw->weights;
    }
    std::optional<EpsilonTable> eps;
    if (j.contains("epsilon")) {
      const auto& je = j.at("epsilon");
      if (je.is_string()) {
        eps = epsilon_table_from_json(read_json_file(resolve(je.get<std::string>())));
      } else {
        const auto& jc = je.at("calibrate");
        CalibrationConfig cc;
        cc.Q = store.front().spec.dims.Q;
        cc.snr_grid_db = jc.contains("snr_grid_db") ? real_list(jc.at("snr_grid_db")) : store.front().spec.snr_grid_db;
        if (jc.contains("channel")) cc.channel = channel_from_json(jc.at("channel"));
        cc.sparsity_min = get_or(jc, "sparsity_min", cc.sparsity_min);
        cc.sparsity_max = get_or(jc, "sparsity_max", cc.sparsity_max);
        cc.trials = get_or(jc, "trials", cc.trials);
        cc.seed = get_or<std::uint64_t>(jc, "seed", cfg.seed);
        eps = calibrate_epsilon(store.front().matrix, cc);
      }
      models.epsilon = &*eps;
    }
    auto rep = run_benchmark(cfg, named, models);
    rep.config_echo = j;
    return rep;
  } catch (const json::exception& e) {
    throw ValidationError(config_path.string() + ": malformed benchmark config: " + e.what());
  }
}

}  // namespace wss

#endif  // WSS_BENCHMARK_HPP
