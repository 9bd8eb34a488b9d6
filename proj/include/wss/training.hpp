#ifndef WSS_TRAINING_HPP
#define WSS_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "wss/network.hpp"

namespace wss {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  double prediction_threshold = 0.5;

  void validate() const {
    // A zero rate is accepted: it freezes the weights, which tests rely on.
    require(learning_rate >= 0.0, "TrainConfig: learning_rate must be >= 0");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "TrainConfig: Adam betas must lie in [0, 1)");
    require(prediction_threshold > 0.0 && prediction_threshold < 1.0,
            "TrainConfig: prediction_threshold must lie in (0, 1)");
  }
};

template <typename T>
struct LabeledSet {
  std::vector<Tensor3<T>> inputs;
  std::vector<OccupancyMask> labels;

  std::size_t size() const { return inputs.size(); }
};

template <typename T>
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const WeightSet<T>& shape) : cfg_(cfg) {
    m_ = WeightSet<T>::zeros_like(shape);
    v_ = WeightSet<T>::zeros_like(shape);
  }

  void step(WeightSet<T>& w, const WeightSet<T>& g) {
    ++t_;
    std::vector<std::vector<T>*> wp, mp, vp;
    std::vector<const std::vector<T>*> gp;
    w.for_each_tensor([&](std::vector<T>& v) { wp.push_back(&v); });
    m_.for_each_tensor([&](std::vector<T>& v) { mp.push_back(&v); });
    v_.for_each_tensor([&](std::vector<T>& v) { vp.push_back(&v); });
    g.for_each_tensor([&](const std::vector<T>& v) { gp.push_back(&v); });
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < wp.size(); ++i)
        for (std::size_t j = 0; j < wp[i]->size(); ++j)
          (*wp[i])[j] -= static_cast<T>(lr * (*gp[i])[j]);
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < wp.size(); ++i) {
      auto& wv = *wp[i];
      auto& mv = *mp[i];
      auto& vv = *vp[i];
      const auto& gv = *gp[i];
      for (std::size_t j = 0; j < wv.size(); ++j) {
        const double gj = gv[j];
        const double m = b1 * mv[j] + (1.0 - b1) * gj;
        const double v = b2 * vv[j] + (1.0 - b2) * gj * gj;
        mv[j] = static_cast<T>(m);
        vv[j] = static_cast<T>(v);
        wv[j] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + cfg_.adam_epsilon));
      }
    }
  }

 private:
  TrainConfig cfg_;
  WeightSet<T> m_, v_;
  long t_ = 0;
};

template <typename T>
struct TrainResult {
  WeightSet<T> weights;
  std::vector<double> loss_trace;  // mean sample loss seen during each epoch
};

template <typename T>
using EpochCallback = std::function<void(int epoch, double loss, const WeightSet<T>& weights)>;

/// Mini-batch training on binary cross-entropy. Shuffle order and weight
/// initialization derive from config.seed; samples are reduced in batch order,
/// so repeated runs are bit-identical.
template <typename T>
TrainResult<T> train(const NetworkSpec& spec, const LabeledSet<T>& data, const TrainConfig& cfg,
                     const std::type_identity_t<WeightSet<T>>* init = nullptr,
                     const std::type_identity_t<EpochCallback<T>>& on_epoch = {}) {
  spec.validate();
  cfg.validate();
  require(data.size() > 0, "train: dataset is empty");
  require(data.inputs.size() == data.labels.size(), "train: inputs/labels size mismatch");
  TrainResult<T> out{init ? *init : WeightSet<T>::glorot(spec, cfg.seed), {}};
  require(out.weights.matches(spec), "train: initial weights do not match the spec");
  Optimizer<T> opt(cfg, out.weights);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5ff1e));
  WeightSet<T> grad = WeightSet<T>::zeros(spec);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      grad.for_each_tensor([](std::vector<T>& v) { std::fill(v.begin(), v.end(), T{}); });
      const auto ftc = pack_all_ftc(out.weights);
      const T scale = T{1} / static_cast<T>(stop - start);
      for (std::size_t i = start; i < stop; ++i)
        epoch_loss += accumulate_gradient(spec, out.weights, ftc, data.inputs[order[i]],
                                          data.labels[order[i]], scale, grad);
      opt.step(out.weights, grad);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss))
      throw NumericalError("train: loss diverged at epoch " + std::to_string(epoch));
    out.loss_trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss, out.weights);
  }
  return out;
}

}  // namespace wss

#endif  // WSS_TRAINING_HPP
