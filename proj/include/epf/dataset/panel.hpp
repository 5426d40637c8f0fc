#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "epf/errors.hpp"
#include "epf/matrix.hpp"

namespace epf {

using Date = std::chrono::sys_days;

inline std::optional<Date> parse_iso_date(std::string_view text) {
  // YYYY-MM-DD
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto ok = [](std::from_chars_result r, const char* end) {
    return r.ec == std::errc{} && r.ptr == end;
  };
  const char* s = text.data();
  if (!ok(std::from_chars(s, s + 4, y), s + 4)) return std::nullopt;
  if (!ok(std::from_chars(s + 5, s + 7, m), s + 7)) return std::nullopt;
  if (!ok(std::from_chars(s + 8, s + 10, d), s + 10)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

inline std::string format_iso_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// When a feature value becomes known relative to the delivery day d.
// DayAhead values are published before the noon gate of d-1 (forecasts,
// announced nuclear availability, calendar terms); Lagged values are observed
// `lag_days` days before d.
struct Availability {
  enum class Kind : std::uint8_t { DayAhead, Lagged };
  Kind kind = Kind::DayAhead;
  int lag_days = 0;

  static Availability day_ahead() { return {Kind::DayAhead, 0}; }
  static Availability lagged(int days) { return {Kind::Lagged, days}; }
  friend bool operator==(const Availability&, const Availability&) = default;
};

struct FeatureSpec {
  std::string name;
  Availability availability = Availability::day_ahead();
};

// (day, hour)-indexed prices and features. Cells without a complete row are
// flagged invalid; their values are NaN.
struct PanelFrame {
  std::vector<Date> days;
  std::vector<int> hours;
  std::vector<FeatureSpec> features;
  Matrix price;                   // days x hours
  std::vector<Matrix> feature_values;  // one days x hours matrix per feature
  std::vector<std::uint8_t> valid;     // days x hours, row-major

  std::size_t n_days() const noexcept { return days.size(); }
  std::size_t n_hours() const noexcept { return hours.size(); }

  std::optional<std::size_t> hour_index(int hour) const {
    const auto it = std::find(hours.begin(), hours.end(), hour);
    if (it == hours.end()) return std::nullopt;
    return static_cast<std::size_t>(it - hours.begin());
  }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].name == name) return i;
    }
    return std::nullopt;
  }

  bool is_valid(std::size_t day, std::size_t hour_idx) const {
    return valid[day * hours.size() + hour_idx] != 0;
  }

  std::size_t valid_cells() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  // Allocates an all-invalid panel of the given shape.
  static PanelFrame allocate(std::vector<Date> days, std::vector<int> hours,
                             std::vector<FeatureSpec> features) {
    PanelFrame p;
    p.days = std::move(days);
    p.hours = std::move(hours);
    p.features = std::move(features);
    const double nan = std::nan("");
    p.price = Matrix(p.days.size(), p.hours.size(), nan);
    p.feature_values.assign(p.features.size(), Matrix(p.days.size(), p.hours.size(), nan));
    p.valid.assign(p.days.size() * p.hours.size(), 0);
    return p;
  }

  // Throws epf::Error describing the first violated invariant.
  void validate() const {
    for (std::size_t i = 1; i < days.size(); ++i) {
      if (!(days[i - 1] < days[i])) throw Error("panel days are not strictly increasing");
    }
    std::set<int> seen_hours;
    for (int h : hours) {
      if (h < 0 || h > 23) throw Error("panel hour out of range: " + std::to_string(h));
      if (!seen_hours.insert(h).second) throw Error("duplicate panel hour " + std::to_string(h));
    }
    std::set<std::string> names;
    for (const auto& f : features) {
      if (!names.insert(f.name).second) throw Error("duplicate feature name '" + f.name + "'");
    }
    if (price.rows() != days.size() || price.cols() != hours.size())
      throw Error("price matrix shape does not match panel keys");
    if (feature_values.size() != features.size())
      throw Error("feature matrix count does not match feature names");
    if (valid.size() != days.size() * hours.size()) throw Error("validity mask has wrong size");
    for (std::size_t d = 0; d < days.size(); ++d) {
      for (std::size_t h = 0; h < hours.size(); ++h) {
        if (!is_valid(d, h)) continue;
        if (!std::isfinite(price(d, h))) throw Error("valid cell with non-finite price");
        for (const auto& fv : feature_values) {
          if (!std::isfinite(fv(d, h))) throw Error("valid cell with missing feature value");
        }
      }
    }
  }
};

}  // namespace epf
