// Command-line front end: dataset generation, recovery, training, inference,
// quantization sweeps, tiling and complexity reports, benchmarks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "wss/benchmark.hpp"
#include "wss/complexity.hpp"
#include "wss/io.hpp"
#include "wss/pipeline.hpp"
#include "wss/quantization.hpp"
#include "wss/tiling.hpp"
#include "wss/training.hpp"

namespace {

using namespace wss;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  std::string format = "json";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Root seed (overrides the config)");
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--format", c.format, "Tabular output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

json load_config(const Common& c, bool required) {
  if (c.config.empty()) {
    if (required) throw ValidationError("--config is required");
    return json::object();
  }
  return read_json_file(c.config);
}

fs::path out_path(const Common& c, const std::string& name) { return fs::path(c.out) / name; }

void write_table(const Common& c, const std::string& stem, const json& j, const std::string& csv) {
  if (c.format == "csv")
    write_text_file(out_path(c, stem + ".csv"), csv);
  else
    write_json_file(out_path(c, stem + ".json"), j);
}

void print_metrics(const std::string& label, const Metrics& m) {
  std::printf("%s pd_ab=%.4f pd_ob=%.4f samples=%zu\n", label.c_str(), m.pd_all_bands, m.pd_occupied_bands,
              m.sample_count);
}

Metrics metrics_or_vacant(const std::vector<OccupancyMask>& preds, const std::vector<OccupancyMask>& truths) {
  Metrics m;
  m.pd_all_bands = pd_all_bands(preds, truths);
  bool any = false;
  for (const auto& t : truths) any |= t.popcount() > 0;
  m.pd_occupied_bands = any ? pd_occupied_bands(preds, truths) : 100.0;
  m.sample_count = preds.size();
  return m;
}

std::pair<json, std::string> predictions_table(const Dataset& d, const std::vector<OccupancyMask>& preds) {
  json rows = json::array();
  std::ostringstream csv;
  csv << "index,snr_db,truth,pred\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rows.push_back({{"index", i},
                    {"snr_db", real_to_json(d.samples[i].capture.snr_db)},
                    {"truth", d.samples[i].mask.to_string()},
                    {"pred", preds[i].to_string()}});
    csv << i << ',' << d.samples[i].capture.snr_db << ',' << d.samples[i].mask.to_string() << ','
        << preds[i].to_string() << '\n';
  }
  return {rows, csv.str()};
}

json metrics_json(const Metrics& m) {
  return {{"pd_ab", m.pd_all_bands}, {"pd_ob", m.pd_occupied_bands}, {"samples", m.sample_count}};
}

// ---- subcommands -----------------------------------------------------------

void cmd_gen_data(const Common& c, const std::string& name) {
  auto spec = dataset_spec_from_json(load_config(c, true));
  if (c.seed) spec.seed = *c.seed;
  const auto d = generate_dataset(spec);
  save_dataset(d, out_path(c, name + ".json"));
  std::printf("wrote %zu samples to %s\n", d.samples.size(), out_path(c, name + ".json").c_str());
}

void cmd_calibrate(const Common& c, const std::string& dataset_path) {
  const json j = load_config(c, true);
  CalibrationConfig cc;
  SensingMatrix a;
  if (!dataset_path.empty()) {
    const auto d = load_dataset(dataset_path);
    a = d.matrix;
    cc.Q = d.spec.dims.Q;
  } else {
    const Dimensions dims = j.contains("dims") ? dimensions_from_json(j.at("dims")) : Dimensions{};
    a = generate_sensing_matrix(dims, get_or<std::uint64_t>(j, "matrix_seed", 1));
    cc.Q = dims.Q;
  }
  require(j.contains("snr_grid_db"), "calibration config needs snr_grid_db");
  cc.snr_grid_db = real_list(j.at("snr_grid_db"));
  if (j.contains("channel")) cc.channel = channel_from_json(j.at("channel"));
  cc.sparsity_min = get_or(j, "sparsity_min", cc.sparsity_min);
  cc.sparsity_max = get_or(j, "sparsity_max", cc.sparsity_max);
  cc.trials = get_or(j, "trials", cc.trials);
  cc.seed = c.seed.value_or(get_or<std::uint64_t>(j, "seed", cc.seed));
  const auto table = calibrate_epsilon(a, cc);
  write_json_file(out_path(c, "epsilon.json"), to_json(table));
  for (const auto& e : table.entries) std::printf("snr_db=%g epsilon=%.6g\n", e.snr_db, e.epsilon);
}

void cmd_omp(const Common& c, const std::string& dataset_path, const std::string& mode, const std::string& eps_path) {
  require(!dataset_path.empty(), "--dataset is required");
  const auto d = load_dataset(dataset_path);
  BenchmarkConfig cfg;
  BenchmarkModels models;
  std::optional<EpsilonTable> eps;
  if (mode == "eps") {
    require(!eps_path.empty(), "--epsilon is required in eps mode");
    eps = epsilon_table_from_json(read_json_file(eps_path));
    models.epsilon = &*eps;
  } else {
    require(mode == "known", "--mode must be known or eps");
  }
  const auto preds = predict_all(d, mode == "eps" ? Method::OmpEpsilon : Method::OmpKnown, cfg, models);
  std::vector<OccupancyMask> truths;
  for (const auto& s : d.samples) truths.push_back(s.mask);
  const auto m = metrics_or_vacant(preds, truths);
  auto [rows, csv] = predictions_table(d, preds);
  write_table(c, "omp_predictions", {{"mode", mode}, {"metrics", metrics_json(m)}, {"predictions", rows}}, csv);
  print_metrics("omp_" + mode, m);
}

void cmd_train(const Common& c, const std::string& dataset_path) {
  require(!dataset_path.empty(), "--dataset is required");
  const json j = load_config(c, false);
  const NetworkSpec spec = j.contains("network") ? network_spec_from_json(j.at("network")) : NetworkSpec::desk();
  TrainConfig tc = j.contains("train") ? train_config_from_json(j.at("train")) : TrainConfig{};
  if (c.seed) tc.seed = *c.seed;
  const auto d = load_dataset(dataset_path);
  const auto set = make_labeled_set<float>(d);
  const auto res = train<float>(spec, set, tc, nullptr, [](int e, double loss, const WeightSet<float>&) {
    std::printf("epoch %d loss %.6f\n", e, loss);
    std::fflush(stdout);
  });
  save_weights(spec, res.weights, out_path(c, "weights.json"));
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < res.loss_trace.size(); ++e) csv << e << ',' << res.loss_trace[e] << '\n';
  write_table(c, "loss", {{"loss_trace", res.loss_trace}}, csv.str());
}

void cmd_infer(const Common& c, const std::string& dataset_path, const std::string& weights_path, double threshold) {
  require(!dataset_path.empty() && !weights_path.empty(), "--dataset and --weights are required");
  const auto d = load_dataset(dataset_path);
  const auto lw = load_weights(weights_path);
  BenchmarkConfig cfg;
  cfg.threshold = threshold;
  const auto preds = predict_all(d, Method::Dlwss, cfg, {&lw.spec, &lw.weights, nullptr});
  std::vector<OccupancyMask> truths;
  for (const auto& s : d.samples) truths.push_back(s.mask);
  const auto m = metrics_or_vacant(preds, truths);
  auto [rows, csv] = predictions_table(d, preds);
  write_table(c, "predictions", {{"metrics", metrics_json(m)}, {"predictions", rows}}, csv);
  print_metrics("dlwss", m);
}

std::vector<QuantizationPolicy> sweep_policies(const json& j) {
  std::vector<QuantizationPolicy> out;
  if (j.contains("policies"))
    for (const auto& p : j.at("policies")) out.push_back(policy_from_json(p));
  if (j.contains("activation_sweep")) {
    const auto& s = j.at("activation_sweep");
    const auto w = format_from_json(s.at("weights"));
    const int ia = s.at("Ia").get<int>();
    const int from = s.at("Wa_from").get<int>();
    const int to = s.at("Wa_to").get<int>();
    const int stepv = from >= to ? -1 : 1;
    for (int wa = from;; wa += stepv) {
      out.push_back({{wa, ia}, w});
      if (wa == to) break;
    }
  }
  require(!out.empty(), "quant-sweep config needs policies or activation_sweep");
  return out;
}

void cmd_quant_sweep(const Common& c, const std::string& dataset_path, const std::string& weights_path) {
  require(!dataset_path.empty() && !weights_path.empty(), "--dataset and --weights are required");
  const json j = load_config(c, true);
  const auto policies = sweep_policies(j);
  const auto d = load_dataset(dataset_path);
  const auto lw = load_weights(weights_path);
  const auto set = make_labeled_set<float>(d);
  const auto range = analyze_dynamic_range(lw.spec, lw.weights, set.inputs);
  write_json_file(out_path(c, "ranges.json"), to_json(range));
  const auto rows = wl_sweep(lw.spec, lw.weights, set.inputs, set.labels, policies, get_or(j, "threshold", 0.5));
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_table(c, "sweep", to_json(rows), csv.str());
  std::cout << csv.str();
}

void cmd_tiling(const Common& c) {
  const json j = load_config(c, false);
  const NetworkSpec spec = j.contains("network") ? network_spec_from_json(j.at("network")) : NetworkSpec::table2();
  const int bits = get_or(j, "word_bits", 32);
  std::vector<TilingConfig> cfgs;
  if (j.contains("tiles"))
    for (const auto& t : j.at("tiles")) cfgs.push_back(tiling_from_json(t));
  else
    cfgs.assign(spec.conv.size(), TilingConfig{20, 16, 20, 20});
  const auto rep = traffic_report(spec, cfgs, bits);
  json out = to_json(rep);
  out["word_bits"] = bits;
  out["no_tiling_bits"] = no_tiling_footprint(spec, bits);
  out["no_tiling_Mib"] = MemoryFootprint::mib(no_tiling_footprint(spec, bits));
  std::ostringstream csv;
  csv << "layer,To,Ti,Tr,Tc,input_bits,weight_bits,output_bits,total_bits,total_Mib,ddr_reads_bits,"
         "ddr_writes_bits,mac_ops\n";
  for (std::size_t i = 0; i < rep.layers.size(); ++i) {
    const auto& l = rep.layers[i];
    csv << "cv" << i + 1 << ',' << l.cfg.To << ',' << l.cfg.Ti << ',' << l.cfg.Tr << ',' << l.cfg.Tc << ','
        << l.footprint.input_tile_bits << ',' << l.footprint.weight_tile_bits << ',' << l.footprint.output_tile_bits
        << ',' << l.footprint.total_bits << ',' << l.footprint.total_mib() << ',' << l.trace.ddr_reads_bits << ','
        << l.trace.ddr_writes_bits << ',' << l.trace.mac_ops << '\n';
  }
  write_table(c, "tiling", out, csv.str());
  for (std::size_t i = 0; i < rep.layers.size(); ++i)
    std::printf("cv%zu %s total=%.4f Mib reads=%llu writes=%llu\n", i + 1, rep.layers[i].cfg.str().c_str(),
                rep.layers[i].footprint.total_mib(),
                static_cast<unsigned long long>(rep.layers[i].trace.ddr_reads_bits),
                static_cast<unsigned long long>(rep.layers[i].trace.ddr_writes_bits));
}

void cmd_complexity(const Common& c) {
  const json j = load_config(c, false);
  ComplexityParams p;
  p.K = get_or(j, "K", p.K);
  p.N = get_or(j, "N", p.N);
  p.Q = get_or(j, "Q", p.Q);
  p.P = get_or(j, "P", p.P);
  const auto omp = omp_op_count(p);
  const NetworkSpec spec = j.contains("network") ? network_spec_from_json(j.at("network")) : NetworkSpec::table2();
  const auto dl = dlwss_op_count(spec);
  json out = {{"params", {{"K", p.K}, {"N", p.N}, {"Q", p.Q}, {"P", p.P}}},
              {"omp",
               {{"matching", omp.matching},
                {"identification", omp.identification},
                {"least_squares", omp.least_squares},
                {"approximation", omp.approximation},
                {"total", omp.total()},
                {"dominant", omp.dominant()}}},
              {"dlwss", {{"conv", dl.conv}, {"fc", dl.fc}, {"total", dl.total()}}}};
  std::ostringstream csv;
  csv << "method,step,ops\n";
  csv << "omp,matching," << omp.matching << "\nomp,identification," << omp.identification << "\nomp,least_squares,"
      << omp.least_squares << "\nomp,approximation," << omp.approximation << "\nomp,total," << omp.total() << '\n';
  for (std::size_t i = 0; i < dl.conv.size(); ++i) csv << "dlwss,cv" << i + 1 << ',' << dl.conv[i] << '\n';
  csv << "dlwss,fc," << dl.fc << "\ndlwss,total," << dl.total() << '\n';
  write_table(c, "complexity", out, csv.str());
  std::cout << csv.str();
}

void cmd_bench(const Common& c) {
  require(!c.config.empty(), "--config is required");
  const auto rep = run_benchmark(fs::path(c.config), c.seed);
  std::ostringstream csv;
  write_benchmark_csv(csv, rep);
  write_table(c, "bench", to_json(rep), csv.str());
  std::cout << csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wideband spectrum sensing toolkit"};
  app.require_subcommand(1);

  Common gen, cal, omp, trn, inf, qs, til, cpx, bch;
  std::string name = "dataset", dataset, mode = "known", eps, weights;
  double threshold = 0.5;

  auto* s_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(s_gen, gen);
  s_gen->add_option("--name", name, "File stem")->capture_default_str();

  auto* s_cal = app.add_subcommand("calibrate-eps", "Calibrate the SNR-indexed residual threshold");
  add_common(s_cal, cal);
  s_cal->add_option("--dataset", dataset, "Take the sensing matrix from this dataset");

  auto* s_omp = app.add_subcommand("omp", "Run OMP recovery on a dataset");
  add_common(s_omp, omp);
  s_omp->add_option("--dataset", dataset)->required();
  s_omp->add_option("--mode", mode, "known or eps")->check(CLI::IsMember({"known", "eps"}));
  s_omp->add_option("--epsilon", eps, "Epsilon table (eps mode)");

  auto* s_trn = app.add_subcommand("train", "Train the occupancy network");
  add_common(s_trn, trn);
  s_trn->add_option("--dataset", dataset)->required();

  auto* s_inf = app.add_subcommand("infer", "Run float inference");
  add_common(s_inf, inf);
  s_inf->add_option("--dataset", dataset)->required();
  s_inf->add_option("--weights", weights)->required();
  s_inf->add_option("--threshold", threshold)->capture_default_str();

  auto* s_qs = app.add_subcommand("quant-sweep", "Fixed-point word-length sweep");
  add_common(s_qs, qs);
  s_qs->add_option("--dataset", dataset)->required();
  s_qs->add_option("--weights", weights)->required();

  auto* s_til = app.add_subcommand("tiling-report", "On-chip footprint and DDR traffic per conv layer");
  add_common(s_til, til);

  auto* s_cpx = app.add_subcommand("complexity", "Analytic operation counts");
  add_common(s_cpx, cpx);

  auto* s_bch = app.add_subcommand("bench", "Config-driven method comparison");
  add_common(s_bch, bch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*s_gen) cmd_gen_data(gen, name);
    else if (*s_cal) cmd_calibrate(cal, dataset);
    else if (*s_omp) cmd_omp(omp, dataset, mode, eps);
    else if (*s_trn) cmd_train(trn, dataset);
    else if (*s_inf) cmd_infer(inf, dataset, weights, threshold);
    else if (*s_qs) cmd_quant_sweep(qs, dataset, weights);
    else if (*s_til) cmd_tiling(til);
    else if (*s_cpx) cmd_complexity(cpx);
    else if (*s_bch) cmd_bench(bch);
  } catch (const wss::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
