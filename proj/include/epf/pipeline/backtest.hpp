#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "epf/aggregation/online.hpp"
#include "epf/conformal/engines.hpp"
#include "epf/conformal/policies.hpp"
#include "epf/dataset/csv_loader.hpp"
#include "epf/dataset/design.hpp"
#include "epf/dataset/synthetic.hpp"
#include "epf/errors.hpp"
#include "epf/evaluation/metrics.hpp"
#include "epf/pipeline/config.hpp"

namespace epf {

inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct CellKey {
  std::string method;      // e.g. "osscp", "aci(0.01)", "agg_agaci"
  std::string base_model;  // "aggregate" for aggregation cells
  std::size_t window = 0;  // 0 for aggregation cells
  double cal_frac = 0.0;   // 0 when the method has no calibration split
  int hour = 0;
  double level = 0.0;      // target coverage 1 - alpha

  std::string label() const {
    return method + "/" + base_model + "/w" + std::to_string(window) + "/c" + format_number(cal_frac) +
           "/h" + std::to_string(hour) + "/l" + format_number(level);
  }
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellRun {
  CellKey key;
  bool reported = true;  // false for cells only computed to feed an aggregation
  std::vector<std::size_t> day_index;  // panel day of each test step
  std::vector<PredictionInterval> intervals;
  std::vector<double> y;
  std::vector<std::string> expert_ids;
  std::vector<std::vector<double>> weights_lower;  // steps x K, empty when no aggregation
  std::vector<std::vector<double>> weights_upper;
  std::optional<std::string> error;
  double wall_seconds = 0.0;
  std::size_t fits = 0;
};

struct ResultsRow {
  std::string run_id;
  std::string method;
  std::string base_model;
  std::size_t window = 0;
  double cal_frac = 0.0;
  int hour = 0;
  double level = 0.0;
  std::string period;
  std::size_t n = 0;
  double coverage = 0.0;
  double coverage_ci_lo = 0.0;
  double coverage_ci_hi = 0.0;
  double width = 0.0;
  double width_finite = 0.0;
  std::size_t n_infinite = 0;
  double width_ci_lo = 0.0;
  double width_ci_hi = 0.0;
  double mean_pinball = 0.0;
  double crps = 0.0;

  friend bool operator==(const ResultsRow& a, const ResultsRow& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.run_id == b.run_id && a.method == b.method && a.base_model == b.base_model &&
           a.window == b.window && same(a.cal_frac, b.cal_frac) && a.hour == b.hour &&
           same(a.level, b.level) && a.period == b.period && a.n == b.n && same(a.coverage, b.coverage) &&
           same(a.coverage_ci_lo, b.coverage_ci_lo) && same(a.coverage_ci_hi, b.coverage_ci_hi) &&
           same(a.width, b.width) && same(a.width_finite, b.width_finite) && a.n_infinite == b.n_infinite &&
           same(a.width_ci_lo, b.width_ci_lo) && same(a.width_ci_hi, b.width_ci_hi) &&
           same(a.mean_pinball, b.mean_pinball) && same(a.crps, b.crps);
  }
};

struct CellFailure {
  CellKey key;
  std::string message;
};

struct BacktestResult {
  std::string run_id;
  std::vector<std::string> day_labels;  // ISO date per panel day
  std::vector<CellRun> cells;
  std::vector<ResultsRow> rows;
  std::vector<CellFailure> failures;
  std::size_t hygiene_violations = 0;
};

// Counts issue-then-reveal violations seen by the spies.
class HygieneMonitor {
 public:
  [[noreturn]] void flag(const std::string& what) {
    ++violations_;
    throw ProtocolError("temporal hygiene violation: " + what);
  }
  std::size_t violations() const { return violations_.load(); }

 private:
  std::atomic<std::size_t> violations_{0};
};

// Engine wrapper that checks each revealed observation was predicted first.
class SpyEngine final : public ConformalEngine {
 public:
  SpyEngine(std::unique_ptr<ConformalEngine> inner, HygieneMonitor& m) : inner_(std::move(inner)), monitor_(m) {}
  std::string kind() const override { return inner_->kind(); }
  PairPrediction predict(std::span<const double> x) const override {
    predicted_ = true;
    last_x_.assign(x.begin(), x.end());
    return inner_->predict(x);
  }
  const ScoreWindow& scores() const override { return inner_->scores(); }
  void update(std::span<const double> x, double y) override {
    if (!predicted_) monitor_.flag(inner_->kind() + " received a truth it never predicted");
    if (!std::equal(x.begin(), x.end(), last_x_.begin(), last_x_.end()))
      monitor_.flag(inner_->kind() + " received a truth for different features than predicted");
    predicted_ = false;
    inner_->update(x, y);
  }
  std::size_t fit_count() const override { return inner_->fit_count(); }
  nlohmann::json checkpoint() const override { return inner_->checkpoint(); }

 private:
  std::unique_ptr<ConformalEngine> inner_;
  HygieneMonitor& monitor_;
  mutable bool predicted_ = false;
  mutable std::vector<double> last_x_;
};

class SpyPolicy final : public IntervalPolicy {
 public:
  SpyPolicy(std::unique_ptr<IntervalPolicy> inner, HygieneMonitor& m) : inner_(std::move(inner)), monitor_(m) {}
  std::string name() const override { return inner_->name(); }
  PredictionInterval issue(const PairPrediction& q, const ScoreWindow& s) override {
    if (issued_) monitor_.flag(inner_->name() + " issued twice without a reveal");
    issued_ = true;
    return inner_->issue(q, s);
  }
  void observe(double y) override {
    if (!issued_) monitor_.flag(inner_->name() + " received a truth before issuing");
    issued_ = false;
    inner_->observe(y);
  }
  nlohmann::json checkpoint() const override { return inner_->checkpoint(); }
  void restore(const nlohmann::json& j) override { inner_->restore(j); }
  std::unique_ptr<IntervalPolicy> clone() const override {
    throw Error("spy policies are not cloneable");
  }
  const IntervalPolicy& inner() const { return *inner_; }

 private:
  std::unique_ptr<IntervalPolicy> inner_;
  HygieneMonitor& monitor_;
  bool issued_ = false;
};

struct PreparedData {
  PanelFrame panel;
  std::map<int, SupervisedSeries> series;
  std::size_t test_start_day = 0;
  std::optional<std::size_t> split_day;
};

inline PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData d;
  if (!cfg.csv_path.empty()) {
    LoadReport rep;
    d.panel = load_prices_csv(cfg.csv_path, PanelSchema{}, &rep);
  } else {
    d.panel = generate_synthetic(cfg.synthetic);
  }
  const std::size_t n_days = d.panel.n_days();
  if (cfg.test_start) {
    const auto it = std::lower_bound(d.panel.days.begin(), d.panel.days.end(), *cfg.test_start);
    if (it == d.panel.days.end()) throw ConfigError("run.test_start is after the last day of data");
    d.test_start_day = static_cast<std::size_t>(it - d.panel.days.begin());
  } else {
    if (cfg.test_days >= n_days) throw ConfigError("run.test_days leaves no history");
    d.test_start_day = n_days - cfg.test_days;
  }
  if (cfg.split_date) {
    const auto it = std::lower_bound(d.panel.days.begin(), d.panel.days.end(), *cfg.split_date);
    const auto idx = static_cast<std::size_t>(it - d.panel.days.begin());
    if (idx <= d.test_start_day || idx >= n_days)
      throw ConfigError("run.split_date must fall strictly inside the test range");
    d.split_day = idx;
  }
  for (int h : cfg.hours) {
    if (!d.panel.hour_index(h)) throw ConfigError("hour " + std::to_string(h) + " is not in the data");
    d.series.emplace(h, hour_slice_design(d.panel, h, cfg.lags, cfg.lag_hours));
  }
  return d;
}

inline std::string aci_method_name(double gamma) { return "aci(" + format_number(gamma) + ")"; }

inline std::string make_run_id(const RunConfig& c) {
  std::string s = std::to_string(c.seed) + "|" + c.csv_path.string() + "|" + std::to_string(c.synthetic.n_days);
  for (int h : c.hours) s += "h" + std::to_string(h);
  for (double l : c.levels) s += "l" + format_number(l);
  for (auto w : c.windows) s += "w" + std::to_string(w);
  for (double f : c.cal_fracs) s += "c" + format_number(f);
  for (const auto& m : c.methods) s += "m" + m;
  for (const auto& b : c.base_models) s += "b" + b;
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Number of results rows a fully successful run produces.
inline std::size_t expected_row_count(const RunConfig& c) {
  const std::size_t periods = c.split_date ? 2 : 1;
  const std::size_t b = c.base_models.size(), w = c.windows.size(), f = c.cal_fracs.size();
  std::size_t per = 0;
  for (const auto& m : c.methods) {
    if (m == "raw_qr") per += b * w;
    else if (m == "aci") per += b * w * f * c.aci_gammas.size();
    else if (is_aggregation_method(m)) per += 1;
    else per += b * w * f;
  }
  return c.hours.size() * c.levels.size() * periods * per;
}

namespace detail {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

inline std::size_t test_begin(const PreparedData& d, int hour) {
  return first_row_at_or_after(d.series.at(hour), d.test_start_day);
}

struct PolicySlot {
  std::size_t cell;  // index into the group's output cells
  std::unique_ptr<IntervalPolicy> policy;
  bool failed = false;
};

struct EngineSlot {
  std::unique_ptr<ConformalEngine> engine;
  std::vector<PolicySlot> policies;
};

// Runs one group of cells that share (hour, base model, window, level and,
// when present, cal_frac). Methods sharing an engine kind share its fits.
inline std::vector<CellRun> run_group(const RunConfig& cfg, const PreparedData& data, int hour,
                                      const std::string& base, std::size_t window,
                                      std::optional<double> cal_frac, double level,
                                      const std::vector<std::pair<std::string, bool>>& methods,
                                      HygieneMonitor& monitor) {
  const double alpha = 1.0 - level;
  const auto& s = data.series.at(hour);
  const std::size_t first = test_begin(data, hour);
  const Matrix X_hist = s.X.slice_rows(0, first);
  const std::span<const double> y_hist(s.y.data(), first);

  std::vector<CellRun> cells;
  for (const auto& [m, reported] : methods) {
    CellRun c;
    c.key = {m, base, window, cal_frac.value_or(0.0), hour, level};
    c.reported = reported;
    cells.push_back(std::move(c));
  }

  Timer timer;
  PairFitter fitter = make_pair_fitter(cfg.model_specs.at(base), alpha);
  std::map<std::string, EngineSlot> engines;
  auto engine_for = [&](const std::string& kind) -> EngineSlot& {
    auto it = engines.find(kind);
    if (it != engines.end()) return it->second;
    std::unique_ptr<ConformalEngine> e;
    if (kind == "raw_qr") {
      e = std::make_unique<RawQuantileEngine>(window, fitter, X_hist, y_hist);
    } else if (kind == "osscp") {
      e = std::make_unique<SequentialSplitEngine>(OsscpConfig{window, *cal_frac, cfg.refit_every},
                                                  fitter, X_hist, y_hist);
    } else {
      e = std::make_unique<HorizonEngine>(HorizonConfig::from_window(window, *cal_frac, cfg.horizon),
                                          fitter, X_hist, y_hist);
    }
    if (cfg.hygiene_spy) e = std::make_unique<SpyEngine>(std::move(e), monitor);
    return engines.emplace(kind, EngineSlot{std::move(e), {}}).first->second;
  };

  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string& m = cells[i].key.method;
    try {
      std::string kind;
      std::unique_ptr<IntervalPolicy> policy;
      if (m == "raw_qr") {
        kind = "raw_qr";
        policy = std::make_unique<RawPolicy>(alpha);
      } else if (m == "osscp" || m == "osscp_horizon") {
        kind = m;
        policy = std::make_unique<FixedLevelPolicy>(alpha);
      } else if (m.rfind("aci(", 0) == 0) {
        kind = cfg.aci_engine;
        policy = std::make_unique<AciPolicy>(alpha, std::stod(m.substr(4, m.size() - 5)));
      } else if (m == "agaci") {
        kind = cfg.aci_engine;
        policy = std::make_unique<AgAciPolicy>(alpha, cfg.agaci_gammas, y_hist, cfg.gradient_trick);
        for (double g : cfg.agaci_gammas) cells[i].expert_ids.push_back("gamma=" + format_number(g));
      } else {
        throw ConfigError("unknown method '" + m + "'");
      }
      if (cfg.hygiene_spy) policy = std::make_unique<SpyPolicy>(std::move(policy), monitor);
      engine_for(kind).policies.push_back({i, std::move(policy), false});
    } catch (const std::exception& e) {
      cells[i].error = e.what();
    }
  }

  auto fail_slot = [&](PolicySlot& p, const std::string& what) {
    p.failed = true;
    if (!cells[p.cell].error) cells[p.cell].error = what;
  };

  for (std::size_t t = first; t < s.size(); ++t) {
    const auto x = s.X.row(t);
    for (auto& [kind, slot] : engines) {
      bool live = false;
      for (auto& p : slot.policies) live = live || !p.failed;
      if (!live) continue;
      PairPrediction q;
      try {
        q = slot.engine->predict(x);
      } catch (const std::exception& e) {
        for (auto& p : slot.policies) fail_slot(p, e.what());
        continue;
      }
      for (auto& p : slot.policies) {
        if (p.failed) continue;
        try {
          const auto iv = p.policy->issue(q, slot.engine->scores());
          auto& c = cells[p.cell];
          c.day_index.push_back(s.t_index[t]);
          c.intervals.push_back(iv);
        } catch (const std::exception& e) {
          fail_slot(p, e.what());
        }
      }
    }
    const double y = s.y[t];
    for (auto& [kind, slot] : engines) {
      bool live = false;
      for (auto& p : slot.policies) {
        if (p.failed) continue;
        try {
          p.policy->observe(y);
          cells[p.cell].y.push_back(y);
          live = true;
        } catch (const std::exception& e) {
          fail_slot(p, e.what());
        }
      }
      if (!live) continue;
      try {
        slot.engine->update(x, y);
      } catch (const std::exception& e) {
        for (auto& p : slot.policies) fail_slot(p, e.what());
      }
    }
  }

  const double elapsed = timer.seconds();
  for (auto& [kind, slot] : engines) {
    for (auto& p : slot.policies) {
      auto& c = cells[p.cell];
      c.fits = slot.engine->fit_count();
      const IntervalPolicy* pol = p.policy.get();
      if (const auto* spy = dynamic_cast<const SpyPolicy*>(pol)) pol = &spy->inner();
      if (const auto* ag = dynamic_cast<const AgAciPolicy*>(pol)) {
        c.weights_lower = ag->lower_engine().weight_history();
        c.weights_upper = ag->upper_engine().weight_history();
      }
    }
  }
  for (auto& c : cells) {
    c.wall_seconds = elapsed;
    if (c.error) {
      c.intervals.clear();
      c.y.clear();
      c.day_index.clear();
    }
  }
  return cells;
}

// Aggregates the intervals of several expert cells; lower and upper bounds
// are combined independently, then crossed bounds are swapped.
inline CellRun run_aggregation(const RunConfig& cfg, const PreparedData& data, const std::string& method,
                               int hour, double level, const std::vector<const CellRun*>& experts) {
  CellRun out;
  out.key = {method, "aggregate", 0, 0.0, hour, level};
  Timer timer;
  try {
    if (experts.empty()) throw Error("no expert cells to aggregate");
    for (const auto* e : experts) {
      if (e->error) throw Error("expert " + e->key.label() + " failed: " + *e->error);
      out.expert_ids.push_back(e->key.base_model + "/w" + std::to_string(e->key.window) + "/c" +
                               format_number(e->key.cal_frac));
    }
    const std::size_t steps = experts.front()->intervals.size();
    for (const auto* e : experts)
      if (e->intervals.size() != steps || e->day_index != experts.front()->day_index)
        throw DimensionError("expert cells are not aligned in time");

    const std::size_t k = experts.size();
    const double alpha = 1.0 - level;
    const bool uniform = method == "uniform_average";
    const auto& s = data.series.at(hour);
    const std::size_t first = test_begin(data, hour);
    ClipTracker tracker(std::span<const double>(s.y.data(), first));
    OnlineAggregator lower(k, {QuantileLevel(alpha / 2.0), cfg.gradient_trick});
    OnlineAggregator upper(k, {QuantileLevel(1.0 - alpha / 2.0), cfg.gradient_trick});
    std::vector<double> lo(k), hi(k);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < k; ++i) {
        lo[i] = experts[i]->intervals[t].lower;
        hi[i] = experts[i]->intervals[t].upper;
      }
      double a, b;
      if (uniform) {
        a = b = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          a += lo[i];
          b += hi[i];
        }
        a /= static_cast<double>(k);
        b /= static_cast<double>(k);
      } else {
        const ClipBound bound = tracker.bound();
        a = lower.predict(lo, bound);
        b = upper.predict(hi, bound);
      }
      out.day_index.push_back(experts.front()->day_index[t]);
      out.intervals.push_back({std::min(a, b), std::max(a, b), level});
      const double y = experts.front()->y[t];
      if (!uniform) {
        lower.observe(y);
        upper.observe(y);
      }
      tracker.add(y);
      out.y.push_back(y);
    }
    if (!uniform) {
      out.weights_lower = lower.weight_history();
      out.weights_upper = upper.weight_history();
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    out.intervals.clear();
    out.y.clear();
    out.day_index.clear();
  }
  out.wall_seconds = timer.seconds();
  return out;
}

// Runs tasks on `workers` threads; results keep task order.
template <class R>
std::vector<R> run_pool(std::vector<std::function<R()>>& tasks, std::size_t workers) {
  std::vector<R> results(tasks.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(1, tasks.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) results[i] = tasks[i]();
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return results;
}

inline double interval_pinball(const PredictionInterval& iv, double y, double alpha) {
  if (!iv.is_finite()) return kInf;
  return 0.5 * (pinball_loss(y, iv.lower, QuantileLevel(alpha / 2.0)) +
                pinball_loss(y, iv.upper, QuantileLevel(1.0 - alpha / 2.0)));
}

}  // namespace detail

// Metrics for one cell over the steps selected by `mask`.
inline ResultsRow evaluate_cell(const RunConfig& cfg, const std::string& run_id, const CellRun& c,
                                const std::string& period, const std::vector<std::size_t>& steps) {
  ResultsRow r;
  r.run_id = run_id;
  r.method = c.key.method;
  r.base_model = c.key.base_model;
  r.window = c.key.window;
  r.cal_frac = c.key.cal_frac;
  r.hour = c.key.hour;
  r.level = c.key.level;
  r.period = period;
  r.n = steps.size();
  const double nan = std::nan("");
  if (steps.empty()) {
    r.coverage = r.coverage_ci_lo = r.coverage_ci_hi = r.width = r.width_finite = nan;
    r.width_ci_lo = r.width_ci_hi = r.mean_pinball = r.crps = nan;
    return r;
  }
  std::vector<PredictionInterval> iv;
  std::vector<double> y, cover, widths;
  for (auto t : steps) {
    iv.push_back(c.intervals[t]);
    y.push_back(c.y[t]);
  }
  cover = coverage_indicators(iv, y);
  const std::size_t block = std::min(cfg.block_len, steps.size());
  const auto cov_ci = block_bootstrap_ci(cover, block, cfg.n_boot, cfg.seed);
  r.coverage = empirical_coverage(iv, y);
  r.coverage_ci_lo = cov_ci.lo;
  r.coverage_ci_hi = cov_ci.hi;
  const auto w = average_width(iv);
  r.width = w.mean;
  r.width_finite = w.finite_mean;
  r.n_infinite = w.n_infinite;
  if (w.has_infinite) {
    r.width_ci_lo = r.width_ci_hi = kInf;
  } else {
    for (const auto& v : iv) widths.push_back(v.width());
    const auto wci = block_bootstrap_ci(widths, block, cfg.n_boot, cfg.seed);
    r.width_ci_lo = wci.lo;
    r.width_ci_hi = wci.hi;
  }
  double pin = 0.0;
  for (std::size_t i = 0; i < iv.size(); ++i) pin += detail::interval_pinball(iv[i], y[i], 1.0 - c.key.level);
  r.mean_pinball = pin / static_cast<double>(iv.size());
  r.crps = nan;
  return r;
}

// Mean CRPS over `steps` of the quantile set formed by all levels of a cell
// family (same method, model, window, fraction and hour).
inline double family_crps(const std::vector<const CellRun*>& family, const std::vector<std::size_t>& steps) {
  if (family.size() < 2 || steps.empty()) return std::nan("");
  std::vector<std::pair<double, const CellRun*>> by_level;
  for (const auto* c : family) {
    if (c->error) return std::nan("");
    by_level.push_back({c->key.level, c});
  }
  std::sort(by_level.begin(), by_level.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  QuantileSetForecast f;
  for (auto it = by_level.rbegin(); it != by_level.rend(); ++it) f.levels.push_back((1.0 - it->first) / 2.0);
  for (const auto& [lvl, c] : by_level) f.levels.push_back(1.0 - (1.0 - lvl) / 2.0);
  double total = 0.0;
  for (auto t : steps) {
    std::vector<double> vals;
    for (auto it = by_level.rbegin(); it != by_level.rend(); ++it) vals.push_back(it->second->intervals[t].lower);
    for (const auto& [lvl, c] : by_level) vals.push_back(c->intervals[t].upper);
    for (double v : vals)
      if (!std::isfinite(v)) return kInf;
    f.values = reorder_quantiles(std::move(vals), f.levels);
    total += crps_riemann(f, family.front()->y[t]);
  }
  return total / static_cast<double>(steps.size());
}

inline BacktestResult run_backtest(const RunConfig& cfg, const PreparedData& data) {
  cfg.validate();
  BacktestResult res;
  res.run_id = make_run_id(cfg);
  for (const auto& d : data.panel.days) res.day_labels.push_back(format_iso_date(d));

  // Base methods to compute, with whether they are reported.
  std::map<std::string, bool> needed;
  for (const auto& m : cfg.methods) {
    if (!is_aggregation_method(m)) needed[m] = true;
  }
  for (const auto& m : cfg.methods) {
    if (!is_aggregation_method(m)) continue;
    const std::string base = m == "uniform_average" ? cfg.uniform_base : m.substr(4);
    needed.emplace(base, false);
  }
  std::vector<std::pair<std::string, bool>> conf_methods, raw_methods;
  for (const auto& [m, rep] : needed) {
    if (m == "raw_qr") {
      raw_methods.push_back({m, rep});
    } else if (m == "aci") {
      for (double g : cfg.aci_gammas) conf_methods.push_back({aci_method_name(g), rep});
    } else {
      conf_methods.push_back({m, rep});
    }
  }

  HygieneMonitor monitor;
  std::vector<std::function<std::vector<CellRun>()>> tasks;
  for (int hour : cfg.hours)
    for (const auto& base : cfg.base_models)
      for (auto window : cfg.windows)
        for (double level : cfg.levels) {
          if (!raw_methods.empty())
            tasks.push_back([&, hour, base, window, level] {
              return detail::run_group(cfg, data, hour, base, window, std::nullopt, level, raw_methods, monitor);
            });
          if (!conf_methods.empty())
            for (double frac : cfg.cal_fracs)
              tasks.push_back([&, hour, base, window, level, frac] {
                return detail::run_group(cfg, data, hour, base, window, frac, level, conf_methods, monitor);
              });
        }
  for (auto& group : detail::run_pool(tasks, cfg.workers))
    for (auto& c : group) res.cells.push_back(std::move(c));

  // Aggregation cells.
  std::vector<std::function<CellRun()>> agg_tasks;
  for (const auto& m : cfg.methods) {
    if (!is_aggregation_method(m)) continue;
    const std::string base = m == "uniform_average" ? cfg.uniform_base : m.substr(4);
    for (int hour : cfg.hours)
      for (double level : cfg.levels) {
        std::vector<const CellRun*> experts;
        for (const auto& c : res.cells) {
          const bool match = base == "aci" ? c.key.method.rfind("aci(", 0) == 0 : c.key.method == base;
          if (match && c.key.hour == hour && c.key.level == level) experts.push_back(&c);
        }
        agg_tasks.push_back([&cfg, &data, m, hour, level, experts] {
          return detail::run_aggregation(cfg, data, m, hour, level, experts);
        });
      }
  }
  for (auto& c : detail::run_pool(agg_tasks, cfg.workers)) res.cells.push_back(std::move(c));
  res.hygiene_violations = monitor.violations();

  // Metrics.
  std::vector<std::pair<std::string, std::function<bool(std::size_t)>>> periods;
  if (data.split_day) {
    const std::size_t split = *data.split_day;
    periods.push_back({"pre", [split](std::size_t d) { return d < split; }});
    periods.push_back({"post", [split](std::size_t d) { return d >= split; }});
  } else {
    periods.push_back({"all", [](std::size_t) { return true; }});
  }
  for (const auto& c : res.cells) {
    if (c.error) res.failures.push_back({c.key, *c.error});
  }
  for (const auto& c : res.cells) {
    if (!c.reported || c.error) continue;
    std::vector<const CellRun*> family;
    for (const auto& o : res.cells) {
      if (o.key.method == c.key.method && o.key.base_model == c.key.base_model &&
          o.key.window == c.key.window && o.key.cal_frac == c.key.cal_frac && o.key.hour == c.key.hour)
        family.push_back(&o);
    }
    for (const auto& [label, in_period] : periods) {
      std::vector<std::size_t> steps;
      for (std::size_t t = 0; t < c.day_index.size(); ++t)
        if (in_period(c.day_index[t])) steps.push_back(t);
      auto row = evaluate_cell(cfg, res.run_id, c, label, steps);
      row.crps = family_crps(family, steps);
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

inline BacktestResult run_backtest(const RunConfig& cfg) { return run_backtest(cfg, prepare_data(cfg)); }

}  // namespace epf
