#ifndef WSS_METRICS_HPP
#define WSS_METRICS_HPP

#include <vector>

#include "wss/core.hpp"
#include "wss/signal_model.hpp"

namespace wss {

struct Metrics {
  double pd_all_bands = 0.0;       // percent
  double pd_occupied_bands = 0.0;  // percent
  std::size_t sample_count = 0;
};

namespace detail {

inline void check_pairs(const std::vector<OccupancyMask>& preds,
                        const std::vector<OccupancyMask>& truths) {
  require(preds.size() == truths.size(), "metrics: prediction/truth count mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i)
    require(preds[i].size() == truths[i].size(), "metrics: mask length mismatch at sample " +
                                                     std::to_string(i));
}

}  // namespace detail

/// Percentage of band decisions (samples x N) that match the truth.
///
/// The displayed formula in the source divides by the number of occupied
/// truth bands, which is not a fraction of bands; the prose definition is
/// used instead.
inline double pd_all_bands(const std::vector<OccupancyMask>& preds,
                           const std::vector<OccupancyMask>& truths) {
  detail::check_pairs(preds, truths);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (int n = 0; n < truths[i].size(); ++n) {
      hit += preds[i][n] == truths[i][n];
      ++total;
    }
  require(total > 0, "pd_all_bands: no band decisions");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

/// Percentage of truly occupied bands that were detected as occupied.
inline double pd_occupied_bands(const std::vector<OccupancyMask>& preds,
                                const std::vector<OccupancyMask>& truths) {
  detail::check_pairs(preds, truths);
  std::size_t hit = 0, occupied = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (int n = 0; n < truths[i].size(); ++n)
      if (truths[i][n]) {
        ++occupied;
        hit += preds[i][n];
      }
  require(occupied > 0, "pd_occupied_bands: truths contain no occupied band");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(occupied);
}

inline Metrics evaluate(const std::vector<OccupancyMask>& preds,
                        const std::vector<OccupancyMask>& truths) {
  Metrics m;
  m.pd_all_bands = pd_all_bands(preds, truths);
  m.pd_occupied_bands = pd_occupied_bands(preds, truths);
  m.sample_count = preds.size();
  return m;
}

}  // namespace wss

#endif  // WSS_METRICS_HPP
