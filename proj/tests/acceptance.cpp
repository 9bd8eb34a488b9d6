// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "wss/benchmark.hpp"
#include "wss/complexity.hpp"
#include "wss/pipeline.hpp"
#include "wss/quantization.hpp"
#include "wss/tiling.hpp"

using namespace wss;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<double> kGrid{-20, -15, -10, -5, 0, 5, 10};

// ---------------------------------------------------------------- 1, 2

Verdict omp_exactness() {
  const Dimensions dims{8, 14, 299};
  const auto a = generate_sensing_matrix(dims, 2024);
  std::size_t hit = 0, total = 0, exact = 0;
  std::vector<int> exact_by_s(5, 0);
  for (int t = 0; t < 500; ++t) {
    const int s = 1 + t % 4;
    Rng rng(derive_seed(17, static_cast<std::uint64_t>(t)));
    const auto mask = OccupancyMask::from_indices(dims.N, random_support(dims.N, s, rng));
    const auto x = generate_spectrum(dims, mask, {}, derive_seed(17, t, 1));
    const auto y = capture(a, x, kInfinity, derive_seed(17, t, 2));
    const auto pred = omp_recover(a, y, OmpConfig::known_sparsity(s)).mask(dims.N);
    for (int n = 0; n < dims.N; ++n)
      if (mask.bits[n]) {
        ++total;
        hit += pred.bits[n];
      }
    if (pred == mask) {
      ++exact;
      ++exact_by_s[static_cast<std::size_t>(s)];
    }
  }
  const double pd = 100.0 * static_cast<double>(hit) / static_cast<double>(total);
  return {hit == total, fmt("Pd^OB = %.2f%% (target 100%%), exact supports %zu/500, by S=1..4: %d %d %d %d of 125",
                            pd, exact, exact_by_s[1], exact_by_s[2], exact_by_s[3], exact_by_s[4])};
}

Verdict omp_oracle_equivalence() {
  Rng rng(31);
  std::uniform_int_distribution<int> kd(2, 4);
  int agree = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int k = kd(rng);
    const int n = std::uniform_int_distribution<int>(k, 6)(rng);
    const int s = std::uniform_int_distribution<int>(1, std::min(2, k))(rng);
    const Dimensions dims{k, n, 4};
    const auto a = generate_sensing_matrix(dims, derive_seed(31, t));
    const auto mask = OccupancyMask::from_indices(n, random_support(n, s, rng));
    const auto x = generate_spectrum(dims, mask, {}, derive_seed(31, t, 1));
    const auto y = capture(a, x, kInfinity, derive_seed(31, t, 2));
    auto got = omp_recover(a, y, OmpConfig::known_sparsity(s)).occupied_bands;
    std::sort(got.begin(), got.end());
    agree += got == oracle::best_support(a.entries, y.samples, s);
  }
  const double rate = 100.0 * agree / trials;
  return {rate >= 99.0, fmt("agreement with exhaustive search %.1f%% over %d trials (target >= 99%%)", rate, trials)};
}

// ---------------------------------------------------------------- 3

double mean_loss(const NetworkSpec& spec, const WeightSet<double>& w, const std::vector<Tensor3<double>>& xs,
                 const std::vector<OccupancyMask>& ms) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += bce_loss(forward(spec, w, xs[i]), ms[i]);
  return s / static_cast<double>(xs.size());
}

std::vector<std::uint8_t> relu_pattern(const NetworkSpec& spec, const WeightSet<double>& w,
                                       const std::vector<Tensor3<double>>& xs) {
  std::vector<std::uint8_t> p;
  for (const auto& x : xs)
    for (const auto& pre : forward_trace(spec, w, x).pre)
      for (double v : pre.data) p.push_back(v > 0.0);
  return p;
}

Verdict gradient_check() {
  Rng rng(41);
  std::uniform_int_distribution<int> bands(2, 4), len(6, 12), chans(1, 3), depth(1, 3), filt(1, 4), ker(1, 3);
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  const int specs = 24;
  for (int t = 0; t < specs; ++t) {
    const int nb = bands(rng), tl = len(rng), ic = chans(rng), d = depth(rng);
    std::vector<int> f, k;
    for (int i = 0; i < d; ++i) {
      f.push_back(filt(rng));
      k.push_back(ker(rng));
    }
    const auto spec = NetworkSpec::make(nb, tl, ic, f, k);
    const auto w = oracle::random_weights<double>(spec, rng);
    std::vector<Tensor3<double>> xs;
    std::vector<OccupancyMask> ms;
    for (int i = 0; i < 2; ++i) {
      xs.push_back(oracle::random_tensor<double>(nb, tl, ic, rng));
      OccupancyMask m(nb);
      for (auto& b : m.bits) b = std::bernoulli_distribution(0.5)(rng);
      ms.push_back(m);
    }
    const auto g = backward(spec, w, xs, ms);
    auto wp = w;
    std::vector<std::vector<double>*> params;
    wp.for_each_tensor([&](std::vector<double>& v) { params.push_back(&v); });
    std::vector<const std::vector<double>*> grads;
    g.for_each_tensor([&](const std::vector<double>& v) { grads.push_back(&v); });
    const auto base = relu_pattern(spec, w, xs);
    const double h = 1e-4;
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p]->size(); ++i) {
        const double orig = (*params[p])[i];
        (*params[p])[i] = orig + h;
        const double lp = mean_loss(spec, wp, xs, ms);
        const bool kp = relu_pattern(spec, wp, xs) != base;
        (*params[p])[i] = orig - h;
        const double lm = mean_loss(spec, wp, xs, ms);
        const bool km = relu_pattern(spec, wp, xs) != base;
        (*params[p])[i] = orig;
        if (kp || km) {
          ++skipped;
          continue;
        }
        const double fd = (lp - lm) / (2 * h);
        const double an = (*grads[p])[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        ++checked;
      }
  }
  return {worst < 1e-4 && checked > 0,
          fmt("%d specs, %zu parameters checked (%zu skipped at ReLU kinks), max relative error %.2e (target < 1e-4)",
              specs, checked, skipped, worst)};
}

// ---------------------------------------------------------------- 4

Verdict shape_chain() {
  const auto spec = NetworkSpec::table2();
  const std::vector<Shape3> want{{14, 299, 2}, {14, 150, 256}, {14, 51, 128}, {14, 1, 64}};
  const bool ok = spec.shape_chain() == want && spec.flatten_len() == 896 && spec.fc.out == 14;
  std::string chain;
  for (const auto& s : spec.shape_chain()) chain += fmt("%dx%dx%d -> ", s.n, s.l, s.c);
  chain += fmt("%d -> %d", spec.flatten_len(), spec.fc.out);
  return {ok, chain};
}

// ---------------------------------------------------------------- 5

Verdict tiled_equivalence() {
  Rng rng(51);
  std::uniform_int_distribution<int> small(1, 6), len(1, 30), ch(1, 24);
  int exact = 0, clipped = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = small(rng), c = ch(rng), f = ch(rng), k = small(rng);
    const int l = k + len(rng) - 1;
    const auto x = oracle::random_tensor<float>(n, l, c, rng);
    const auto w = oracle::random_conv<float>(f, c, k, rng);
    const TilingConfig cfg{small(rng), small(rng), small(rng), small(rng)};
    const int lout = l - k + 1;
    clipped += (f % cfg.To) || (c % cfg.Ti) || (n % cfg.Tr) || (lout % cfg.Tc);
    exact += tiled_conv_forward(x, w, cfg).data == conv1d_forward(x, w).data;
  }
  return {exact == 50 && clipped > 0, fmt("%d/50 bit-exact, %d with edge-clipped tiles", exact, clipped)};
}

// ---------------------------------------------------------------- 6

Verdict footprint_reproduction() {
  const auto fp = footprint(NetworkSpec::table2().conv[0], {20, 16, 20, 20}, 32);
  struct Row {
    const char* name;
    double ours, reference, last_digit;
  };
  const Row rows[] = {{"output", fp.output_mib(), 0.24, 0.01},
                      {"weight", fp.weight_mib(), 1.464, 0.001},
                      {"input", fp.input_mib(), 1.650, 0.001},
                      {"total", fp.total_mib(), 3.35, 0.01}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double err = std::abs(r.ours - r.reference);
    ok = ok && err <= 0.002 * r.reference + r.last_digit;
    detail += fmt("%s %.4f vs %g (%.2f%%); ", r.name, r.ours, r.reference, 100 * err / r.reference);
  }
  const double nt = MemoryFootprint::mib(no_tiling_footprint(NetworkSpec::table2(), 32));
  const double nt_err = std::abs(nt - 116.4) / 116.4;
  ok = ok && nt_err < 0.01;
  detail += fmt("no tiling %.2f vs 116.4 (%.2f%%)", nt, 100 * nt_err);
  return {ok, detail};
}

// ---------------------------------------------------------------- 7

Verdict integer_bits() {
  const int a = min_integer_bits(-77.061, 199.309), b = min_integer_bits(-86.594, 158.975);
  const int c = min_integer_bits(-0.4812, 0.9561), d = min_integer_bits(-0.0661, 0.0219);
  return {a == 9 && b == 9 && c == 2 && d == 2, fmt("(%d, %d, %d, %d), expected (9, 9, 2, 2)", a, b, c, d)};
}

// ---------------------------------------------------------------- 8, 9

constexpr double kThreshold = 0.4;

struct Trained {
  NetworkSpec spec = NetworkSpec::desk();
  WeightSet<float> weights;
  double train_seconds = 0.0;
};

Trained train_desk() {
  DatasetSpec ds;
  ds.sparsity_min = 1;
  ds.sparsity_max = 7;
  ds.snr_grid_db = kGrid;
  ds.samples_per_cell = 200;
  ds.seed = 11;
  ds.matrix_seed = 5;
  ds.keep_spectrum = false;
  const auto data = make_labeled_set<float>(generate_dataset(ds));
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  Trained t;
  const auto t0 = std::chrono::steady_clock::now();
  t.weights = train<float>(t.spec, data, cfg, nullptr, [](int e, double loss, const WeightSet<float>&) {
                std::printf("  train epoch %d loss %.4f\n", e, loss);
                std::fflush(stdout);
              }).weights;
  t.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

Verdict dlwss_vs_omp(const Trained& t) {
  const auto matrix = generate_sensing_matrix({8, 14, 299}, 5);
  CalibrationConfig cc;
  cc.snr_grid_db = kGrid;
  cc.sparsity_min = 1;
  cc.sparsity_max = 7;
  cc.trials = 30;
  cc.seed = 77;
  const auto eps = calibrate_epsilon(matrix, cc);
  bool ok = true;
  std::string detail = fmt("threshold %.1f, trained in %.0fs; ", kThreshold, t.train_seconds);
  for (int which : {0, 1}) {
    auto ds = which == 0 ? ess_spec() : hss_spec();
    ds.snr_grid_db = kGrid;
    ds.samples_per_cell = 60;
    ds.seed = 201 + static_cast<std::uint64_t>(which);
    ds.matrix_seed = 5;
    ds.keep_spectrum = false;
    const auto d = generate_dataset(ds);
    const auto ad = pseudo_inverse_lu(d.matrix);
    detail += which == 0 ? "ESS Pd^OB" : "HSS Pd^AB";
    double worst_gap = 1e9;
    for (double snr : kGrid) {
      std::vector<OccupancyMask> truth, dl, om;
      for (const auto& s : d.samples) {
        if (s.capture.snr_db != snr) continue;
        truth.push_back(s.mask);
        dl.push_back(predict_occupancy(forward(t.spec, t.weights, network_input<float>(ad, s.capture)), kThreshold));
        om.push_back(
            omp_recover(d.matrix, s.capture, OmpConfig::residual_threshold(eps.epsilon_for(snr))).mask(14));
      }
      const auto md = evaluate(dl, truth), mo = evaluate(om, truth);
      const double a = which == 0 ? md.pd_occupied_bands : md.pd_all_bands;
      const double b = which == 0 ? mo.pd_occupied_bands : mo.pd_all_bands;
      detail += fmt(" %g:%.1f/%.1f", snr, a, b);
      worst_gap = std::min(worst_gap, a - b);
      ok = ok && a > b;
    }
    detail += fmt(" (min gap %.1f); ", worst_gap);
  }
  return {ok, detail + "values are DLWSS/OMP-eps per SNR dB"};
}

Verdict quantization_convergence(const Trained& t) {
  DatasetSpec ds;
  ds.sparsity_min = 1;
  ds.sparsity_max = 7;
  ds.snr_grid_db = kGrid;
  ds.samples_per_cell = 21;
  ds.seed = 301;
  ds.matrix_seed = 5;
  ds.keep_spectrum = false;
  auto set = make_labeled_set<float>(generate_dataset(ds));
  set.inputs.resize(1000);
  set.labels.resize(1000);
  const auto ranges = analyze_dynamic_range(t.spec, t.weights, set.inputs);
  const int ia = ranges.activation_i_min(), iw = ranges.weight_i_min();

  const QuantizationPolicy wide{{32, ia + 4}, {32, iw + 4}};
  const auto wq = quantize_weights(t.weights, wide.weight_format);
  int identical = 0;
  for (const auto& x : set.inputs) {
    const auto q = quantized_forward_prequantized(t.spec, wq, x, wide.activation_format);
    identical += predict_occupancy(q.probs, kThreshold) == predict_occupancy(forward(t.spec, t.weights, x), kThreshold);
  }

  std::vector<QuantizationPolicy> policies;
  for (int wa = 29; wa >= 22; --wa) policies.push_back({{wa, ia}, {16, 2}});
  const auto rows = wl_sweep(t.spec, t.weights, set.inputs, set.labels, policies, kThreshold);
  bool monotone = true, knee = false;
  std::string sweep;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sweep += fmt(" %d:%.1f", rows[i].policy.activation_format.W, rows[i].pd_ab);
    if (i > 0) {
      monotone = monotone && rows[i].pd_ab <= rows[i - 1].pd_ab;
      knee = knee || rows[i - 1].pd_ab - rows[i].pd_ab >= 10.0;
    }
  }

  // Where the collapse actually sits for this model.
  std::vector<QuantizationPolicy> wider;
  for (int wa = 21; wa > ia; --wa) wider.push_back({{wa, ia}, {16, 2}});
  std::string tail;
  if (!wider.empty())
    for (const auto& r : wl_sweep(t.spec, t.weights, set.inputs, set.labels, wider, kThreshold))
      tail += fmt(" %d:%.1f", r.policy.activation_format.W, r.pd_ab);

  const bool ok = identical == 1000 && monotone && knee;
  return {ok, fmt("I_a=%d I_w=%d; W=32 identical %d/1000; Pd^AB by W_a%s; non-increasing %s, knee %s; below 22:%s",
                  ia, iw, identical, sweep.c_str(), monotone ? "yes" : "no", knee ? "yes" : "no", tail.c_str())};
}

// ---------------------------------------------------------------- 10

Verdict complexity_cross_check() {
  int cases = 0, equal = 0;
  for (int k : {2, 4, 8})
    for (int n : {k, k + 3, 14})
      for (int q : {1, 7, 30, 299})
        for (int p = 1; p <= k; ++p) {
          const auto a = generate_sensing_matrix({k, n, q}, derive_seed(61, k, n, q));
          Rng rng(derive_seed(62, p, q));
          CMatrix y(k, q);
          for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = complex_gaussian(rng);
          OmpOpCounter ops;
          omp_recover(a.entries, y, OmpConfig::known_sparsity(p), &ops);
          const auto ref = omp_op_count({k, n, q, p});
          ++cases;
          equal += ops.matching == ref.matching && ops.approximation == ref.approximation;
        }
  const auto layer1 = dlwss_op_count(NetworkSpec::table2()).conv[0];
  return {equal == cases && layer1 == 322560000u,
          fmt("%d/%d grid points exact; DLWSS layer 1 = %llu", equal, cases, static_cast<unsigned long long>(layer1))};
}

// ---------------------------------------------------------------- 11

Verdict epsilon_sanity() {
  const auto a = generate_sensing_matrix({8, 14, 299}, 5);
  CalibrationConfig noiseless;
  noiseless.snr_grid_db = {kInfinity};
  noiseless.sparsity_min = 1;
  noiseless.sparsity_max = 3;
  noiseless.trials = 100;
  noiseless.seed = 71;
  const auto z = calibrate_epsilon(a, noiseless).entries.front();

  CalibrationConfig noisy = noiseless;
  noisy.snr_grid_db = kGrid;
  noisy.seed = 72;
  const auto table = calibrate_epsilon(a, noisy);
  double worst_spread = 0.0, min_step = 1e300;
  std::string detail;
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const auto& e = table.entries[i];
    const auto [lo, hi] = std::minmax_element(e.per_sparsity.begin(), e.per_sparsity.end());
    const double spread = (*hi - *lo) / e.epsilon;
    worst_spread = std::max(worst_spread, spread);
    if (i > 0) {
      const double prev = table.entries[i - 1].epsilon;
      min_step = std::min(min_step, std::abs(e.epsilon - prev) / std::min(e.epsilon, prev));
    }
    detail += fmt(" %g:%.3g(%.0f%%)", e.snr_db, e.epsilon, 100 * spread);
  }
  const bool ok = z.epsilon < 1e-6 && worst_spread < min_step;
  return {ok, fmt("noiseless eps %.3g (target < 1e-6, per S=1..3: %.2g %.2g %.2g); eps(spread over S) by SNR dB:%s; "
                  "worst per-SNR spread %.0f%% vs smallest adjacent-SNR change %.0f%%",
                  z.epsilon, z.per_sparsity[0], z.per_sparsity[1], z.per_sparsity[2], detail.c_str(),
                  100 * worst_spread, 100 * min_step)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int i) { return selected.empty() || selected.count(i) > 0; };

  std::optional<Trained> model;
  auto trained = [&]() -> const Trained& {
    if (!model) model = train_desk();
    return *model;
  };
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"OMP exactness", omp_exactness},
      {"OMP oracle equivalence", omp_oracle_equivalence},
      {"Gradient correctness", gradient_check},
      {"Shape chain", shape_chain},
      {"Tiled equivalence", tiled_equivalence},
      {"Footprint reproduction", footprint_reproduction},
      {"Integer-bit reproduction", integer_bits},
      {"Quantization convergence", [&] { return quantization_convergence(trained()); }},
      {"DLWSS vs OMP-eps trend", [&] { return dlwss_vs_omp(trained()); }},
      {"Complexity cross-check", complexity_cross_check},
      {"Epsilon calibration sanity", epsilon_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::printf("%s  %2d %s [%.1fs]: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, secs, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
