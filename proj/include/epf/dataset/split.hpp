#pragma once

#include <cmath>
#include <cstddef>

#include "epf/errors.hpp"

namespace epf {

// Inclusive index range [first, last].
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const noexcept { return last - first + 1; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct SplitIndices {
  IndexRange train;
  IndexRange cal;
  friend bool operator==(const SplitIndices&, const SplitIndices&) = default;
};

// Number of calibration points for a window; the rest goes to training.
inline std::size_t calibration_size(std::size_t window, double cal_frac) {
  if (!(cal_frac > 0.0 && cal_frac < 1.0))
    throw ConfigError("cal_frac must lie in (0, 1), got " + std::to_string(cal_frac));
  // Guard against 0.3 * 10 = 2.9999999999999996.
  return static_cast<std::size_t>(std::floor(static_cast<double>(window) * cal_frac + 1e-9));
}

// Sequential train/calibration split of the `window` observations immediately
// before `t_pred`. Indices are 1-based, as are observation counts: the
// history available before t_pred is 1 .. t_pred - 1.
inline SplitIndices sequential_split(std::size_t n_obs, std::size_t t_pred, std::size_t window,
                                     double cal_frac) {
  const std::size_t n_cal = calibration_size(window, cal_frac);
  if (n_cal < 1)
    throw ConfigError("window * cal_frac must be >= 1 (window " + std::to_string(window) + ")");
  if (window - n_cal < 1) throw ConfigError("training part of the split is empty");
  if (t_pred > n_obs + 1)
    throw ConfigError("prediction index " + std::to_string(t_pred) + " is beyond the data (" +
                      std::to_string(n_obs) + " observations)");
  const std::size_t available = t_pred >= 1 ? t_pred - 1 : 0;
  if (window > available) throw InsufficientHistoryError(window, available);

  SplitIndices s;
  s.cal = {t_pred - n_cal, t_pred - 1};
  s.train = {t_pred - window, t_pred - n_cal - 1};
  return s;
}

}  // namespace epf
