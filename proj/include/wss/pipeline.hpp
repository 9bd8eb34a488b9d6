#ifndef WSS_PIPELINE_HPP
#define WSS_PIPELINE_HPP

#include <vector>

#include "wss/preprocess.hpp"
#include "wss/signal_model.hpp"
#include "wss/training.hpp"

namespace wss {

template <typename T>
Tensor3<T> network_input(const PseudoInverse& ad, const SnsCapture& y) {
  return preprocess(ad, y).values.template cast<T>();
}

/// Network inputs and labels for every sample of a dataset.
template <typename T>
LabeledSet<T> make_labeled_set(const Dataset& d) {
  const auto ad = pseudo_inverse_lu(d.matrix);
  LabeledSet<T> out;
  out.inputs.reserve(d.samples.size());
  out.labels.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    out.inputs.push_back(network_input<T>(ad, s.capture));
    out.labels.push_back(s.mask);
  }
  return out;
}

/// Content hash over the sensing matrix, every capture and every label.
inline std::uint64_t dataset_digest(const Dataset& d) {
  std::uint64_t h = matrix_digest(d.matrix.entries);
  for (const auto& s : d.samples) {
    h = fnv1a(s.capture.samples.data(), sizeof(cplx) * static_cast<std::size_t>(s.capture.samples.size()), h);
    h = fnv1a(s.mask.bits.data(), s.mask.bits.size(), h);
    h = fnv1a(&s.capture.snr_db, sizeof(double), h);
  }
  return h;
}

}  // namespace wss

#endif  // WSS_PIPELINE_HPP
