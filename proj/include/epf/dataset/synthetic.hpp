#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "epf/dataset/panel.hpp"
#include "epf/errors.hpp"

namespace epf {

// Nonstationary day-ahead price generator. For day d and hour h:
//
//   Y[d,h] = m_d * s_h + a * Y[d-1,h] + b * Z_d + v_d * sigma * eps[d,h] + spike[d,h]
//
// with (m_d, v_d) = (1, 1) before `shift_day` and
// (shift_mean_mult, shift_scale_mult) from `shift_day` on. Spikes are positive
// exponential shocks with mean `spike_scale`, drawn with probability
// `spike_prob`. Z is a unit-variance AR(1) driver unless `exogenous` is given.
struct SyntheticConfig {
  std::size_t n_days = 6 * 365;
  std::vector<int> hours = {3, 8, 13, 18, 23};
  std::vector<double> hourly_levels = {35.0, 45.0, 40.0, 50.0, 42.0};
  double ar_coef = 0.5;
  double exo_coef = 4.0;
  double noise_scale = 5.0;
  std::optional<std::size_t> shift_day;
  double shift_mean_mult = 1.0;
  double shift_scale_mult = 1.0;
  double spike_prob = 0.0;
  double spike_scale = 30.0;
  std::uint64_t seed = 1;
  double exo_persistence = 0.8;
  std::optional<std::vector<double>> exogenous;
  Date start_date = Date{std::chrono::year{2016} / std::chrono::January / 11};

  void validate() const {
    if (n_days == 0) throw ConfigError("synthetic: n_days must be positive");
    if (hours.empty()) throw ConfigError("synthetic: hours must be non-empty");
    if (hourly_levels.size() != hours.size())
      throw ConfigError("synthetic: hourly_levels must have one value per hour");
    for (int h : hours) {
      if (h < 0 || h > 23) throw ConfigError("synthetic: hour out of range " + std::to_string(h));
    }
    if (!(std::abs(ar_coef) < 1.0)) throw ConfigError("synthetic: |ar_coef| must be < 1");
    if (!(noise_scale > 0.0)) throw ConfigError("synthetic: noise_scale must be > 0");
    if (shift_day && *shift_day > n_days)
      throw ConfigError("synthetic: shift_day must lie in [0, n_days]");
    if (!(shift_mean_mult > 0.0) || !(shift_scale_mult > 0.0))
      throw ConfigError("synthetic: shift multipliers must be > 0");
    if (!(spike_prob >= 0.0 && spike_prob < 1.0))
      throw ConfigError("synthetic: spike_prob must lie in [0, 1)");
    if (!(spike_scale > 0.0)) throw ConfigError("synthetic: spike_scale must be > 0");
    if (!(std::abs(exo_persistence) < 1.0))
      throw ConfigError("synthetic: |exo_persistence| must be < 1");
    if (exogenous && exogenous->size() != n_days)
      throw ConfigError("synthetic: provided exogenous series must have n_days values");
  }
};

inline PanelFrame generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();

  std::vector<Date> days(cfg.n_days);
  for (std::size_t d = 0; d < cfg.n_days; ++d) days[d] = cfg.start_date + std::chrono::days{static_cast<int>(d)};
  std::vector<FeatureSpec> features = {
      {"exo", Availability::day_ahead()},     {"weekend", Availability::day_ahead()},
      {"toy_sin", Availability::day_ahead()}, {"toy_cos", Availability::day_ahead()},
      {"clock", Availability::day_ahead()},
  };
  PanelFrame panel = PanelFrame::allocate(std::move(days), cfg.hours, std::move(features));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> spike(1.0 / cfg.spike_scale);

  const std::size_t nh = cfg.hours.size();
  std::vector<double> prev(nh);
  for (std::size_t h = 0; h < nh; ++h) prev[h] = cfg.hourly_levels[h] / (1.0 - cfg.ar_coef);

  const double innov_sd = std::sqrt(1.0 - cfg.exo_persistence * cfg.exo_persistence);
  double z = 0.0;
  for (std::size_t d = 0; d < cfg.n_days; ++d) {
    if (cfg.exogenous) {
      z = (*cfg.exogenous)[d];
    } else {
      z = d == 0 ? normal(rng) : cfg.exo_persistence * z + innov_sd * normal(rng);
    }
    const bool shifted = cfg.shift_day && d >= *cfg.shift_day;
    const double m = shifted ? cfg.shift_mean_mult : 1.0;
    const double v = shifted ? cfg.shift_scale_mult : 1.0;

    const std::chrono::weekday wd{panel.days[d]};
    const double weekend = (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? 1.0 : 0.0;
    const std::chrono::year_month_day ymd{panel.days[d]};
    const auto jan1 = Date{ymd.year() / std::chrono::January / 1};
    const double doy = static_cast<double>((panel.days[d] - jan1).count());
    const double angle = 2.0 * std::numbers::pi * doy / 365.25;

    for (std::size_t h = 0; h < nh; ++h) {
      double y = m * cfg.hourly_levels[h] + cfg.ar_coef * prev[h] + cfg.exo_coef * z +
                 v * cfg.noise_scale * normal(rng);
      if (cfg.spike_prob > 0.0 && unif(rng) < cfg.spike_prob) y += spike(rng);
      prev[h] = y;
      panel.price(d, h) = y;
      panel.feature_values[0](d, h) = z;
      panel.feature_values[1](d, h) = weekend;
      panel.feature_values[2](d, h) = std::sin(angle);
      panel.feature_values[3](d, h) = std::cos(angle);
      panel.feature_values[4](d, h) = static_cast<double>(d) / 365.0;
      panel.valid[d * nh + h] = 1;
    }
  }
  panel.validate();
  return panel;
}

}  // namespace epf
