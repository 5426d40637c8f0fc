#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "epf/dataset/panel.hpp"
#include "epf/errors.hpp"
#include "epf/matrix.hpp"

namespace epf {

// Per-hour regression problem. Row i predicts the price of day t_index[i] at
// `hour`; every column of X is either a price lag (all panel hours at day
// t - lag) or a day-ahead-published feature of that day.
struct SupervisedSeries {
  std::vector<std::size_t> t_index;
  Matrix X;
  std::vector<double> y;
  int hour = 0;
  std::size_t max_lag = 0;
  std::vector<FeatureSpec> columns;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t n_features() const noexcept { return X.cols(); }
};

// Which hours contribute price lags: every panel hour, or only the target hour.
enum class LagHours { All, Same };

inline SupervisedSeries hour_slice_design(const PanelFrame& panel, int hour,
                                          const std::set<int>& lag_spec,
                                          LagHours lag_hours = LagHours::All) {
  const auto h_idx = panel.hour_index(hour);
  if (!h_idx) throw Error("hour " + std::to_string(hour) + " is not present in the panel");
  for (int lag : lag_spec) {
    if (lag <= 0) throw ConfigError("price lags must be positive, got " + std::to_string(lag));
  }
  const std::size_t max_lag = lag_spec.empty() ? 0 : static_cast<std::size_t>(*lag_spec.rbegin());
  if (panel.n_days() <= max_lag) {
    throw InsufficientHistoryError(max_lag + 1, panel.n_days());
  }

  SupervisedSeries s;
  s.hour = hour;
  s.max_lag = max_lag;
  for (int lag : lag_spec) {
    for (int hh : panel.hours) {
      if (lag_hours == LagHours::Same && hh != hour) continue;
      s.columns.push_back({"price_h" + std::to_string(hh) + "_lag" + std::to_string(lag),
                           Availability::lagged(lag)});
    }
  }
  for (const auto& f : panel.features) s.columns.push_back(f);

  const std::size_t nh = panel.n_hours();
  std::vector<double> row(s.columns.size());
  for (std::size_t t = max_lag; t < panel.n_days(); ++t) {
    if (!panel.is_valid(t, *h_idx)) continue;
    bool ok = true;
    std::size_t c = 0;
    for (int lag : lag_spec) {
      const std::size_t src = t - static_cast<std::size_t>(lag);
      for (std::size_t hh = 0; hh < nh; ++hh) {
        if (lag_hours == LagHours::Same && hh != *h_idx) continue;
        if (!panel.is_valid(src, hh)) {
          ok = false;
          break;
        }
        row[c++] = panel.price(src, hh);
      }
      if (!ok) break;
    }
    if (!ok) continue;
    for (const auto& fv : panel.feature_values) row[c++] = fv(t, *h_idx);
    s.X.append_row(row);
    s.t_index.push_back(t);
    s.y.push_back(panel.price(t, *h_idx));
  }
  return s;
}

// Index of the first row whose target day is >= `day_index`, or size().
inline std::size_t first_row_at_or_after(const SupervisedSeries& s, std::size_t day_index) {
  return static_cast<std::size_t>(
      std::lower_bound(s.t_index.begin(), s.t_index.end(), day_index) - s.t_index.begin());
}

}  // namespace epf
