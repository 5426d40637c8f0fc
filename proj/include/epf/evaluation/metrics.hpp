#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "epf/conformal/interval.hpp"
#include "epf/errors.hpp"
#include "epf/models/pinball.hpp"
#include "epf/models/quantile_model.hpp"

namespace epf {

// Per-step values of one metric for one evaluated cell.
struct MetricSeries {
  std::string method;
  int hour = 0;
  double level = 0.0;
  std::string period;
  std::vector<double> values;
};

inline std::vector<double> coverage_indicators(std::span<const PredictionInterval> intervals,
                                               std::span<const double> y) {
  if (intervals.size() != y.size()) throw DimensionError("coverage: length mismatch");
  std::vector<double> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = intervals[t].contains(y[t]) ? 1.0 : 0.0;
  return out;
}

// Fraction of y inside its interval, bounds inclusive.
inline double empirical_coverage(std::span<const PredictionInterval> intervals, std::span<const double> y) {
  if (intervals.size() != y.size()) throw DimensionError("empirical_coverage: length mismatch");
  if (y.empty()) throw Error("empirical_coverage: empty sequence");
  const auto ind = coverage_indicators(intervals, y);
  double s = 0.0;
  for (double v : ind) s += v;
  return s / static_cast<double>(y.size());
}

struct WidthSummary {
  double mean = 0.0;          // +inf when any interval is infinite
  bool has_infinite = false;
  double finite_mean = 0.0;   // mean over the finite intervals (NaN if none)
  std::size_t n_infinite = 0;
};

inline WidthSummary average_width(std::span<const PredictionInterval> intervals) {
  if (intervals.empty()) throw Error("average_width: empty sequence");
  WidthSummary w;
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& iv : intervals) {
    if (iv.is_finite()) {
      s += iv.width();
      ++n;
    } else {
      ++w.n_infinite;
    }
  }
  w.has_infinite = w.n_infinite > 0;
  w.finite_mean = n > 0 ? s / static_cast<double>(n) : std::nan("");
  w.mean = w.has_infinite ? kInf : w.finite_mean;
  return w;
}

// Levels 0.01, 0.02, ..., 0.99.
inline std::vector<double> default_crps_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

// 2 * integral over (0, 1) of rho_a(y - F^-1(a)), approximated by a Riemann
// sum over the forecast's levels. Each level gets the cell between the
// midpoints to its neighbours (0 and 1 close the ends) and the sum is
// normalized by the covered mass, so on a uniform grid it is the plain mean.
inline double crps_riemann(const QuantileSetForecast& f, double y) {
  const auto& lv = f.levels;
  const auto& q = f.values;
  if (lv.size() != q.size()) throw DimensionError("crps_riemann: one value per level required");
  if (lv.size() < 3) throw ConfigError("crps_riemann: at least 3 levels are required");
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (!(lv[i] > 0.0 && lv[i] < 1.0)) throw ConfigError("crps_riemann: levels must lie in (0, 1)");
    if (i > 0 && !(lv[i - 1] < lv[i])) throw ConfigError("crps_riemann: levels must be ascending");
    if (i > 0 && q[i - 1] > q[i]) throw Error("crps_riemann: forecast is not monotone");
    if (std::isnan(q[i])) throw NumericError("crps_riemann: NaN quantile");
  }
  double s = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double left = i == 0 ? 0.0 : lv[i - 1];
    const double right = i + 1 == lv.size() ? 1.0 : lv[i + 1];
    const double w = 0.5 * (right - left);
    s += w * pinball_loss(y, q[i], QuantileLevel(lv[i]));
    mass += w;
  }
  return 2.0 * s / mass;
}

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_boot = 0;
  std::size_t block_len = 0;
};

inline double series_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Linear-interpolation sample quantile (type 7).
inline double sample_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(i);
  if (frac == 0.0) return v[i];
  return v[i] + frac * (v[i + 1] - v[i]);
}

// Non-overlapping block bootstrap of the series mean. The series is cut into
// consecutive blocks of `block_len` (the last one may be shorter); blocks are
// drawn with replacement and concatenated until the original length is
// reached, truncating the final block.
inline BootstrapCI block_bootstrap_ci(std::span<const double> series, std::size_t block_len,
                                      std::size_t n_boot, std::uint64_t seed, double lo_level = 0.05,
                                      double hi_level = 0.95) {
  const std::size_t n = series.size();
  if (n == 0) throw Error("block_bootstrap_ci: empty series");
  if (block_len == 0 || block_len > n) throw ConfigError("block_bootstrap_ci: block_len must lie in [1, n]");
  if (n_boot == 0) throw ConfigError("block_bootstrap_ci: n_boot must be >= 1");

  BootstrapCI ci;
  ci.point = series_mean(series);
  ci.n_boot = n_boot;
  ci.block_len = block_len;
  const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
  if (*mn == *mx) {
    ci.point = ci.lo = ci.hi = *mn;
    return ci;
  }
  if (!std::isfinite(ci.point)) {
    ci.lo = ci.hi = ci.point;
    return ci;
  }
  const std::size_t n_blocks = (n + block_len - 1) / block_len;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_blocks - 1);
  std::vector<double> stats;
  stats.reserve(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    double s = 0.0;
    std::size_t filled = 0;
    while (filled < n) {
      const std::size_t start = pick(rng) * block_len;
      const std::size_t end = std::min(start + block_len, n);
      for (std::size_t i = start; i < end && filled < n; ++i, ++filled) s += series[i];
    }
    stats.push_back(s / static_cast<double>(n));
  }
  ci.lo = sample_quantile(stats, lo_level);
  ci.hi = sample_quantile(stats, hi_level);
  return ci;
}

}  // namespace epf
