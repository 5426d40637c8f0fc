#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "epf/dataset/panel.hpp"
#include "epf/errors.hpp"

namespace epf {

// Column layout expected in a price file. `date`, `hour` and `price` are
// always required; `required_features` must also be present. Any other
// column is loaded as an optional day-ahead feature unless listed in
// `ignored_columns`.
struct PanelSchema {
  std::vector<std::string> required_features;
  std::vector<std::string> ignored_columns;

  // Covariates of the French day-ahead panel. Price lags are built later by
  // hour_slice_design, so they are not part of the file.
  static PanelSchema french_day_ahead() {
    return {{"residual_load_forecast", "nuclear_availability", "gas_price", "oil_price",
             "coal_price", "eur_gbp", "eur_usd", "holiday", "weekend", "toy_sin", "toy_cos",
             "clock"},
            {}};
  }
};

struct InvalidRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct LoadReport {
  std::size_t data_rows = 0;
  std::size_t loaded_rows = 0;
  std::vector<InvalidRow> invalid_rows;
};

struct LoadOptions {
  // Throw RowError on the first bad row instead of skipping it.
  bool strict = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

}  // namespace detail

// Reads a long-format (date, hour, price, features...) file into a PanelFrame.
// Malformed rows are skipped and listed in `report`; a duplicate (date, hour)
// key or a missing required column aborts with an exception.
inline PanelFrame load_prices_csv(std::istream& in, const PanelSchema& schema,
                                  LoadReport* report = nullptr, LoadOptions options = {}) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = {};

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("price file has no header row", "date");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = detail::split_commas(line);

  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(std::string(header[i]), i).second) {
      throw SchemaError("duplicate column '" + std::string(header[i]) + "'", std::string(header[i]));
    }
  }
  auto require = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw SchemaError("missing required column '" + name + "'", name);
    return it->second;
  };
  const std::size_t date_col = require("date");
  const std::size_t hour_col = require("hour");
  const std::size_t price_col = require("price");
  for (const auto& f : schema.required_features) require(f);

  std::vector<std::pair<std::string, std::size_t>> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == date_col || i == hour_col || i == price_col) continue;
    const std::string name(header[i]);
    if (std::find(schema.ignored_columns.begin(), schema.ignored_columns.end(), name) !=
        schema.ignored_columns.end())
      continue;
    feature_cols.emplace_back(name, i);
  }

  struct Row {
    Date date;
    int hour;
    double price;
    std::vector<double> features;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::map<std::pair<Date, int>, std::size_t> seen;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++rep.data_rows;
    const auto fields = detail::split_commas(line);
    auto reject = [&](std::string reason) {
      if (options.strict) throw RowError("line " + std::to_string(line_no) + ": " + reason, line_no);
      rep.invalid_rows.push_back({line_no, std::move(reason)});
    };
    if (fields.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " +
             std::to_string(fields.size()));
      continue;
    }
    const auto date = parse_iso_date(fields[date_col]);
    if (!date) {
      reject("unparseable date '" + std::string(fields[date_col]) + "'");
      continue;
    }
    int hour = 0;
    if (!detail::parse_int(fields[hour_col], hour) || hour < 0 || hour > 23) {
      reject("unparseable hour '" + std::string(fields[hour_col]) + "'");
      continue;
    }
    if (const auto it = seen.find({*date, hour}); it != seen.end()) {
      throw DuplicateKeyError("duplicate key (" + std::string(fields[date_col]) + ", " +
                              std::to_string(hour) + ") on lines " + std::to_string(it->second) +
                              " and " + std::to_string(line_no));
    }
    seen.emplace(std::make_pair(*date, hour), line_no);

    Row row{*date, hour, 0.0, {}, line_no};
    if (!detail::parse_double(fields[price_col], row.price)) {
      reject("unparseable price '" + std::string(fields[price_col]) + "'");
      continue;
    }
    bool ok = true;
    row.features.reserve(feature_cols.size());
    for (const auto& [name, idx] : feature_cols) {
      double v = 0.0;
      if (!detail::parse_double(fields[idx], v)) {
        reject("unparseable value '" + std::string(fields[idx]) + "' in column '" + name + "'");
        ok = false;
        break;
      }
      row.features.push_back(v);
    }
    if (ok) rows.push_back(std::move(row));
  }

  std::set<Date> day_set;
  std::set<int> hour_set;
  for (const auto& r : rows) {
    day_set.insert(r.date);
    hour_set.insert(r.hour);
  }
  std::vector<FeatureSpec> specs;
  for (const auto& [name, idx] : feature_cols) specs.push_back({name, Availability::day_ahead()});

  PanelFrame panel = PanelFrame::allocate({day_set.begin(), day_set.end()},
                                          {hour_set.begin(), hour_set.end()}, std::move(specs));
  for (const auto& r : rows) {
    const auto d = static_cast<std::size_t>(
        std::lower_bound(panel.days.begin(), panel.days.end(), r.date) - panel.days.begin());
    const auto h = *panel.hour_index(r.hour);
    panel.price(d, h) = r.price;
    for (std::size_t f = 0; f < r.features.size(); ++f) panel.feature_values[f](d, h) = r.features[f];
    panel.valid[d * panel.hours.size() + h] = 1;
  }
  rep.loaded_rows = rows.size();
  panel.validate();
  return panel;
}

inline PanelFrame load_prices_csv(const std::filesystem::path& path, const PanelSchema& schema,
                                  LoadReport* report = nullptr, LoadOptions options = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open price file " + path.string());
  return load_prices_csv(in, schema, report, options);
}

// Writes the panel back in the same long format (valid cells only).
inline void write_prices_csv(std::ostream& out, const PanelFrame& panel) {
  out << "date,hour,price";
  for (const auto& f : panel.features) out << ',' << f.name;
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, r.ptr - buf);
  };
  for (std::size_t d = 0; d < panel.n_days(); ++d) {
    const std::string date = format_iso_date(panel.days[d]);
    for (std::size_t h = 0; h < panel.n_hours(); ++h) {
      if (!panel.is_valid(d, h)) continue;
      out << date << ',' << panel.hours[h] << ',';
      put(panel.price(d, h));
      for (const auto& fv : panel.feature_values) {
        out << ',';
        put(fv(d, h));
      }
      out << '\n';
    }
  }
}

}  // namespace epf
