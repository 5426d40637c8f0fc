#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/errors.hpp"
#include "epf/pipeline/backtest.hpp"

namespace epf {

inline constexpr int kReportSchemaVersion = 1;

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols = {
      "run_id",   "method",         "base_model",     "window", "cal_frac",     "hour",
      "level",    "period",         "n",              "coverage", "coverage_ci_lo", "coverage_ci_hi",
      "width",    "width_finite",   "n_infinite",     "width_ci_lo", "width_ci_hi", "mean_pinball",
      "crps"};
  return cols;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

inline double parse_number(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw Error("results: bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string row_field(const ResultsRow& r, std::size_t i) {
  switch (i) {
    case 0: return r.run_id;
    case 1: return r.method;
    case 2: return r.base_model;
    case 3: return std::to_string(r.window);
    case 4: return format_number(r.cal_frac);
    case 5: return std::to_string(r.hour);
    case 6: return format_number(r.level);
    case 7: return r.period;
    case 8: return std::to_string(r.n);
    case 9: return format_number(r.coverage);
    case 10: return format_number(r.coverage_ci_lo);
    case 11: return format_number(r.coverage_ci_hi);
    case 12: return format_number(r.width);
    case 13: return format_number(r.width_finite);
    case 14: return std::to_string(r.n_infinite);
    case 15: return format_number(r.width_ci_lo);
    case 16: return format_number(r.width_ci_hi);
    case 17: return format_number(r.mean_pinball);
    default: return format_number(r.crps);
  }
}

inline void set_row_field(ResultsRow& r, std::size_t i, const std::string& v) {
  switch (i) {
    case 0: r.run_id = v; break;
    case 1: r.method = v; break;
    case 2: r.base_model = v; break;
    case 3: r.window = static_cast<std::size_t>(parse_number(v)); break;
    case 4: r.cal_frac = parse_number(v); break;
    case 5: r.hour = static_cast<int>(parse_number(v)); break;
    case 6: r.level = parse_number(v); break;
    case 7: r.period = v; break;
    case 8: r.n = static_cast<std::size_t>(parse_number(v)); break;
    case 9: r.coverage = parse_number(v); break;
    case 10: r.coverage_ci_lo = parse_number(v); break;
    case 11: r.coverage_ci_hi = parse_number(v); break;
    case 12: r.width = parse_number(v); break;
    case 13: r.width_finite = parse_number(v); break;
    case 14: r.n_infinite = static_cast<std::size_t>(parse_number(v)); break;
    case 15: r.width_ci_lo = parse_number(v); break;
    case 16: r.width_ci_hi = parse_number(v); break;
    case 17: r.mean_pinball = parse_number(v); break;
    default: r.crps = parse_number(v); break;
  }
}

// JSON has no infinities; they are written as strings.
inline nlohmann::json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}
inline double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_number(j.get<std::string>());
  return j.get<double>();
}

}  // namespace detail

inline void write_results_csv(std::ostream& out, const std::vector<ResultsRow>& rows) {
  const auto& cols = results_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << detail::row_field(r, i);
    out << '\n';
  }
}

inline std::vector<ResultsRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("results file is empty");
  const auto header = detail::split_csv_line(line);
  if (header != results_columns()) throw SchemaError("results file has an unexpected header", "run_id");
  std::vector<ResultsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw Error("results file: wrong field count");
    ResultsRow r;
    for (std::size_t i = 0; i < f.size(); ++i) detail::set_row_field(r, i, f[i]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json results_to_json(const std::vector<ResultsRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  const auto& cols = results_columns();
  for (const auto& r : rows) {
    nlohmann::json o;
    o["run_id"] = r.run_id;
    o["method"] = r.method;
    o["base_model"] = r.base_model;
    o["window"] = r.window;
    o["cal_frac"] = detail::number_json(r.cal_frac);
    o["hour"] = r.hour;
    o["level"] = detail::number_json(r.level);
    o["period"] = r.period;
    o["n"] = r.n;
    o["n_infinite"] = r.n_infinite;
    for (std::size_t i : {9, 10, 11, 12, 13, 15, 16, 17, 18})
      o[cols[i]] = detail::number_json(detail::parse_number(detail::row_field(r, i)));
    arr.push_back(std::move(o));
  }
  return {{"schema_version", kReportSchemaVersion}, {"rows", arr}};
}

inline std::vector<ResultsRow> results_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) throw Error("unsupported results schema version");
  std::vector<ResultsRow> rows;
  for (const auto& o : j.at("rows")) {
    ResultsRow r;
    r.run_id = o.at("run_id").get<std::string>();
    r.method = o.at("method").get<std::string>();
    r.base_model = o.at("base_model").get<std::string>();
    r.window = o.at("window").get<std::size_t>();
    r.cal_frac = detail::number_from_json(o.at("cal_frac"));
    r.hour = o.at("hour").get<int>();
    r.level = detail::number_from_json(o.at("level"));
    r.period = o.at("period").get<std::string>();
    r.n = o.at("n").get<std::size_t>();
    r.n_infinite = o.at("n_infinite").get<std::size_t>();
    r.coverage = detail::number_from_json(o.at("coverage"));
    r.coverage_ci_lo = detail::number_from_json(o.at("coverage_ci_lo"));
    r.coverage_ci_hi = detail::number_from_json(o.at("coverage_ci_hi"));
    r.width = detail::number_from_json(o.at("width"));
    r.width_finite = detail::number_from_json(o.at("width_finite"));
    r.width_ci_lo = detail::number_from_json(o.at("width_ci_lo"));
    r.width_ci_hi = detail::number_from_json(o.at("width_ci_hi"));
    r.mean_pinball = detail::number_from_json(o.at("mean_pinball"));
    r.crps = detail::number_from_json(o.at("crps"));
    rows.push_back(std::move(r));
  }
  return rows;
}

// Long format: one line per (row, metric) with the bootstrap band when known.
inline void write_metrics_csv(std::ostream& out, const std::vector<ResultsRow>& rows) {
  out << "method,base_model,window,cal_frac,hour,level,period,metric,value,ci_lo,ci_hi\n";
  const double nan = std::nan("");
  for (const auto& r : rows) {
    const std::string key = r.method + "," + r.base_model + "," + std::to_string(r.window) + "," +
                            format_number(r.cal_frac) + "," + std::to_string(r.hour) + "," +
                            format_number(r.level) + "," + r.period + ",";
    auto put = [&](const char* metric, double v, double lo, double hi) {
      out << key << metric << ',' << format_number(v) << ',' << format_number(lo) << ','
          << format_number(hi) << '\n';
    };
    put("coverage", r.coverage, r.coverage_ci_lo, r.coverage_ci_hi);
    put("width", r.width, r.width_ci_lo, r.width_ci_hi);
    put("mean_pinball", r.mean_pinball, nan, nan);
    put("crps", r.crps, nan, nan);
  }
}

inline void write_predictions_csv(std::ostream& out, const BacktestResult& res) {
  out << "day,hour,method,base_model,window,cal_frac,level,lower,upper,y\n";
  for (const auto& c : res.cells) {
    if (!c.reported || c.error) continue;
    const std::string key = "," + std::to_string(c.key.hour) + "," + c.key.method + "," + c.key.base_model +
                            "," + std::to_string(c.key.window) + "," + format_number(c.key.cal_frac) + "," +
                            format_number(c.key.level) + ",";
    for (std::size_t t = 0; t < c.intervals.size(); ++t) {
      out << res.day_labels[c.day_index[t]] << key << format_number(c.intervals[t].lower) << ','
          << format_number(c.intervals[t].upper) << ',' << format_number(c.y[t]) << '\n';
    }
  }
}

// Long format weight histories: one line per (cell, bound, step, expert).
inline void write_weights_csv(std::ostream& out, const BacktestResult& res) {
  out << "method,base_model,window,cal_frac,hour,level,bound,step,expert_id,weight\n";
  for (const auto& c : res.cells) {
    if (!c.reported || c.error) continue;
    const std::string key = c.key.method + "," + c.key.base_model + "," + std::to_string(c.key.window) + "," +
                            format_number(c.key.cal_frac) + "," + std::to_string(c.key.hour) + "," +
                            format_number(c.key.level) + ",";
    for (const auto* bound : {"lower", "upper"}) {
      const auto& hist = std::string(bound) == "lower" ? c.weights_lower : c.weights_upper;
      for (std::size_t t = 0; t < hist.size(); ++t)
        for (std::size_t k = 0; k < hist[t].size(); ++k)
          out << key << bound << ',' << t << ',' << c.expert_ids[k] << ',' << format_number(hist[t][k]) << '\n';
    }
  }
}

inline void write_failures_csv(std::ostream& out, const BacktestResult& res) {
  out << "cell,message\n";
  for (const auto& f : res.failures) {
    std::string msg = f.message;
    for (auto& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    out << f.key.label() << ',' << msg << '\n';
  }
}

inline void write_timings_csv(std::ostream& out, const BacktestResult& res) {
  out << "cell,wall_seconds,fits\n";
  for (const auto& c : res.cells) out << c.key.label() << ',' << c.wall_seconds << ',' << c.fits << '\n';
}

enum class ReportFormat { Csv, Json };

// Writes the results table and, with plot_data, coverage/width-vs-target
// series and (when a backtest is given) weight evolution series. Plot series
// keep only the largest window of each method; aggregation rows have no
// window and are always kept.
inline std::vector<std::filesystem::path> emit_report(const std::vector<ResultsRow>& rows,
                                                      const std::filesystem::path& dir, ReportFormat format,
                                                      bool plot_data, const BacktestResult* backtest = nullptr) {
  if (rows.empty()) throw Error("emit_report: empty results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  std::vector<std::filesystem::path> files;
  if (format == ReportFormat::Csv) {
    auto out = detail::open_output(dir / "results.csv");
    write_results_csv(out, rows);
    files.push_back(dir / "results.csv");
  } else {
    auto out = detail::open_output(dir / "results.json");
    out << results_to_json(rows).dump(1) << '\n';
    files.push_back(dir / "results.json");
  }
  if (plot_data) {
    std::map<std::string, std::size_t> largest;
    for (const auto& r : rows) largest[r.method] = std::max(largest[r.method], r.window);
    auto cov = detail::open_output(dir / "plot_coverage_vs_target.csv");
    auto wid = detail::open_output(dir / "plot_width_vs_target.csv");
    cov << "method,base_model,window,cal_frac,hour,period,target,coverage,ci_lo,ci_hi\n";
    wid << "method,base_model,window,cal_frac,hour,period,target,width,ci_lo,ci_hi\n";
    for (const auto& r : rows) {
      if (r.window != largest[r.method]) continue;
      const std::string key = r.method + "," + r.base_model + "," + std::to_string(r.window) + "," +
                              format_number(r.cal_frac) + "," + std::to_string(r.hour) + "," + r.period + "," +
                              format_number(r.level) + ",";
      cov << key << format_number(r.coverage) << ',' << format_number(r.coverage_ci_lo) << ','
          << format_number(r.coverage_ci_hi) << '\n';
      wid << key << format_number(r.width) << ',' << format_number(r.width_ci_lo) << ','
          << format_number(r.width_ci_hi) << '\n';
    }
    files.push_back(dir / "plot_coverage_vs_target.csv");
    files.push_back(dir / "plot_width_vs_target.csv");
    if (backtest) {
      auto w = detail::open_output(dir / "plot_weights.csv");
      write_weights_csv(w, *backtest);
      files.push_back(dir / "plot_weights.csv");
    }
  }
  nlohmann::json manifest = {{"schema_version", kReportSchemaVersion}, {"files", nlohmann::json::array()}};
  for (const auto& f : files) manifest["files"].push_back(f.filename().string());
  auto m = detail::open_output(dir / "report_manifest.json");
  m << manifest.dump(1) << '\n';
  return files;
}

// Writes every backtest artifact into cfg.out_dir.
inline void write_backtest_outputs(const RunConfig& cfg, const BacktestResult& res) {
  const auto& dir = cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  if (!res.rows.empty()) emit_report(res.rows, dir, ReportFormat::Csv, cfg.plot_data, &res);
  else {
    auto out = detail::open_output(dir / "results.csv");
    write_results_csv(out, res.rows);
  }
  {
    auto out = detail::open_output(dir / "metrics.csv");
    write_metrics_csv(out, res.rows);
  }
  if (cfg.write_predictions) {
    auto out = detail::open_output(dir / "predictions.csv");
    write_predictions_csv(out, res);
  }
  if (cfg.write_weights) {
    auto out = detail::open_output(dir / "weights.csv");
    write_weights_csv(out, res);
  }
  {
    auto out = detail::open_output(dir / "failures.csv");
    write_failures_csv(out, res);
  }
  {
    auto out = detail::open_output(dir / "timings.csv");
    write_timings_csv(out, res);
  }
}

}  // namespace epf
