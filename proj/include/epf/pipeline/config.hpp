#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "epf/conformal/policies.hpp"
#include "epf/dataset/design.hpp"
#include "epf/dataset/panel.hpp"
#include "epf/dataset/synthetic.hpp"
#include "epf/errors.hpp"
#include "epf/models/quantile_model.hpp"

namespace epf {

inline ModelSpec default_model_spec(const std::string& name, std::uint64_t seed) {
  if (name == "linear_qr") return {name, LinearQrSpec{0.0, {}}};
  if (name == "lasso_qr") return {name, LinearQrSpec{0.1, {}}};
  if (name == "qgb") {
    GbHyperparameters h;
    h.seed = seed;
    return {name, GbQrSpec{h}};
  }
  throw ConfigError("unknown base model '" + name + "'");
}

inline std::map<std::string, ModelSpec> default_model_specs(std::uint64_t seed = 1) {
  std::map<std::string, ModelSpec> m;
  for (const char* name : {"linear_qr", "lasso_qr", "qgb"}) m[name] = default_model_spec(name, seed);
  return m;
}

struct GridSearchConfig {
  std::vector<double> lasso_lambdas = {0.0, 0.01, 0.03, 0.1, 0.3, 1.0};
  std::vector<std::size_t> qgb_n_estimators = {50, 100, 200};
  std::vector<std::size_t> qgb_max_depth = {2, 3};
  std::vector<double> qgb_learning_rate = {0.1};
  std::size_t validation_days = 365;
  std::size_t train_days = 730;
};

struct RunConfig {
  // Data: a price CSV, or the synthetic generator when csv_path is empty.
  std::filesystem::path csv_path;
  SyntheticConfig synthetic;
  std::set<int> lags = {1, 2, 7};
  LagHours lag_hours = LagHours::All;

  std::vector<int> hours = {3, 8, 13, 18, 23};
  std::vector<double> levels = {0.6, 0.7, 0.8, 0.9, 0.95, 0.98};
  std::vector<std::size_t> windows = {1460, 1095, 730, 365, 270, 180, 90};
  std::vector<double> cal_fracs = {0.25, 0.5, 0.75};
  std::vector<std::string> methods = {"raw_qr", "osscp", "osscp_horizon", "aci",
                                      "agaci",  "agg_agaci", "uniform_average"};
  std::vector<std::string> base_models = {"linear_qr"};
  std::map<std::string, ModelSpec> model_specs = default_model_specs();

  std::optional<Date> test_start;
  std::size_t test_days = 730;
  std::optional<Date> split_date;

  // [conformal]
  std::size_t refit_every = 1;  // 0 = never
  std::size_t horizon = 1;
  std::vector<double> aci_gammas = {0.01};
  std::vector<double> agaci_gammas = default_gamma_grid();
  std::string aci_engine = "osscp_horizon";

  // [aggregation]
  bool gradient_trick = true;
  std::string uniform_base = "agaci";

  // [evaluation]
  std::size_t block_len = 30;
  std::size_t n_boot = 500;

  GridSearchConfig gridsearch;

  std::uint64_t seed = 1;
  bool synthetic_seed_set = false;  // explicit seeds are kept when the master seed changes
  bool qgb_seed_set = false;
  std::filesystem::path out_dir = "out";
  std::size_t workers = 0;  // 0 = hardware concurrency
  bool hygiene_spy = true;
  bool write_weights = true;
  bool write_predictions = true;
  bool plot_data = false;

  void validate() const;
};

namespace detail {

inline std::string trim_copy(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else {
    if constexpr (std::is_unsigned_v<T>) {
      if (!text.empty() && text[0] == '-') throw ConfigError("'" + key + "': expected a non-negative value");
    }
    is >> v;
    if (!is || !(is >> std::ws).eof())
      throw ConfigError("'" + key + "': cannot parse '" + text + "'");
    return v;
  }
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_scalar<T>(key, item));
  return out;
}

inline Date parse_date_value(const std::string& key, const std::string& text) {
  const auto d = parse_iso_date(text);
  if (!d) throw ConfigError("'" + key + "': invalid date '" + text + "'");
  return *d;
}

// Section-aware reader that rejects keys it does not know.
class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& root) : root_(root) {}

  std::optional<std::string> get(const std::string& section, const std::string& key) {
    known_[section].insert(key);
    const auto sec = root_.get_child_optional(boost::property_tree::ptree::path_type(section, '/'));
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '/'));
    if (!v) return std::nullopt;
    return trim_copy(*v);
  }

  template <class T>
  void scalar(const std::string& section, const std::string& key, T& out) {
    if (auto v = get(section, key)) out = parse_scalar<T>(section + "." + key, *v);
  }
  template <class T>
  void list(const std::string& section, const std::string& key, std::vector<T>& out) {
    if (auto v = get(section, key)) {
      out = parse_list<T>(section + "." + key, *v);
      if (out.empty()) throw ConfigError("'" + section + "." + key + "' must not be empty");
    }
  }

  void reject_unknown() const {
    for (const auto& [section, child] : root_) {
      const auto it = known_.find(section);
      if (it == known_.end()) throw ConfigError("unknown configuration section [" + section + "]");
      for (const auto& [key, value] : child) {
        if (!it->second.count(key))
          throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
      }
    }
  }

 private:
  const boost::property_tree::ptree& root_;
  std::map<std::string, std::set<std::string>> known_;
};

}  // namespace detail

inline bool is_aggregation_method(const std::string& m) {
  return m.rfind("agg_", 0) == 0 || m == "uniform_average";
}

inline const std::set<std::string>& base_methods() {
  static const std::set<std::string> s = {"raw_qr", "osscp", "osscp_horizon", "aci", "agaci"};
  return s;
}

inline void RunConfig::validate() const {
  if (hours.empty()) throw ConfigError("hours must be non-empty");
  if (levels.empty()) throw ConfigError("levels must be non-empty");
  if (methods.empty()) throw ConfigError("methods must be non-empty");
  if (windows.empty()) throw ConfigError("windows must be non-empty");
  if (cal_fracs.empty()) throw ConfigError("cal_fracs must be non-empty");
  if (base_models.empty()) throw ConfigError("base_models must be non-empty");
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("target levels must lie in (0, 1)");
  std::set<double> uniq(levels.begin(), levels.end());
  if (uniq.size() != levels.size()) throw ConfigError("target levels must be distinct");
  for (double c : cal_fracs) {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("cal_frac must lie in (0, 1)");
  }
  for (auto w : windows)
    if (w < 4) throw ConfigError("windows must be >= 4 days");
  for (const auto& m : methods) {
    if (base_methods().count(m)) continue;
    if (m == "uniform_average") continue;
    if (m.rfind("agg_", 0) == 0 && base_methods().count(m.substr(4))) continue;
    throw ConfigError("unknown method '" + m + "'");
  }
  if (!base_methods().count(uniform_base)) throw ConfigError("aggregation.uniform_base: unknown method");
  if (aci_engine != "osscp" && aci_engine != "osscp_horizon")
    throw ConfigError("conformal.aci_engine must be osscp or osscp_horizon");
  if (aci_gammas.empty()) throw ConfigError("conformal.aci_gammas must be non-empty");
  if (agaci_gammas.empty()) throw ConfigError("agaci: empty gamma grid");
  for (double g : aci_gammas)
    if (!(g >= 0.0)) throw ConfigError("ACI gammas must be >= 0");
  for (double g : agaci_gammas)
    if (!(g >= 0.0)) throw ConfigError("AgACI gammas must be >= 0");
  if (horizon < 1) throw ConfigError("conformal.horizon must be >= 1");
  if (block_len < 1 || n_boot < 1) throw ConfigError("evaluation: block_len and n_boot must be >= 1");
  for (const auto& b : base_models)
    if (!model_specs.count(b)) throw ConfigError("no specification for base model '" + b + "'");
  if (test_days == 0 && !test_start) throw ConfigError("run.test_days must be positive");
}

// Reads an INI-style configuration. Sections: [dataset], [dataset.synthetic],
// [run], [models.linear_qr], [models.lasso_qr], [models.qgb], [conformal],
// [aggregation], [evaluation], [gridsearch].
inline RunConfig parse_run_config(std::istream& in) {
  boost::property_tree::ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("configuration syntax: ") + e.what());
  }
  detail::IniReader r(root);
  RunConfig c;

  std::string csv;
  r.scalar("dataset", "csv", csv);
  c.csv_path = csv;
  std::vector<int> lags;
  r.list("dataset", "lags", lags);
  if (!lags.empty()) c.lags = {lags.begin(), lags.end()};
  std::string lag_hours = "all";
  r.scalar("dataset", "lag_hours", lag_hours);
  if (lag_hours == "all") c.lag_hours = LagHours::All;
  else if (lag_hours == "same") c.lag_hours = LagHours::Same;
  else throw ConfigError("dataset.lag_hours must be 'all' or 'same'");

  auto& s = c.synthetic;
  const std::string ss = "dataset.synthetic";
  r.scalar(ss, "n_days", s.n_days);
  r.list(ss, "hours", s.hours);
  r.list(ss, "hourly_levels", s.hourly_levels);
  r.scalar(ss, "ar_coef", s.ar_coef);
  r.scalar(ss, "exo_coef", s.exo_coef);
  r.scalar(ss, "noise_scale", s.noise_scale);
  if (auto v = r.get(ss, "shift_day")) s.shift_day = detail::parse_scalar<std::size_t>(ss + ".shift_day", *v);
  r.scalar(ss, "shift_mean_mult", s.shift_mean_mult);
  r.scalar(ss, "shift_scale_mult", s.shift_scale_mult);
  r.scalar(ss, "spike_prob", s.spike_prob);
  r.scalar(ss, "spike_scale", s.spike_scale);
  r.scalar(ss, "exo_persistence", s.exo_persistence);
  std::optional<std::uint64_t> synth_seed;
  if (auto v = r.get(ss, "seed")) synth_seed = detail::parse_scalar<std::uint64_t>(ss + ".seed", *v);
  if (auto v = r.get(ss, "start_date")) s.start_date = detail::parse_date_value(ss + ".start_date", *v);

  r.scalar("run", "seed", c.seed);
  s.seed = synth_seed.value_or(c.seed);
  c.synthetic_seed_set = synth_seed.has_value();
  r.list("run", "hours", c.hours);
  r.list("run", "levels", c.levels);
  r.list("run", "windows", c.windows);
  r.list("run", "cal_fracs", c.cal_fracs);
  r.list("run", "methods", c.methods);
  r.list("run", "base_models", c.base_models);
  if (auto v = r.get("run", "test_start")) c.test_start = detail::parse_date_value("run.test_start", *v);
  r.scalar("run", "test_days", c.test_days);
  if (auto v = r.get("run", "split_date")) c.split_date = detail::parse_date_value("run.split_date", *v);
  std::string out;
  r.scalar("run", "out_dir", out);
  if (!out.empty()) c.out_dir = out;
  r.scalar("run", "workers", c.workers);
  r.scalar("run", "hygiene_spy", c.hygiene_spy);
  r.scalar("run", "write_weights", c.write_weights);
  r.scalar("run", "write_predictions", c.write_predictions);
  r.scalar("run", "plot_data", c.plot_data);

  for (const auto& name : {"linear_qr", "lasso_qr"}) {
    ModelSpec spec = default_model_spec(name, c.seed);
    auto& p = std::get<LinearQrSpec>(spec.params);
    const std::string sec = std::string("models.") + name;
    r.scalar(sec, "lambda", p.lambda);
    r.scalar(sec, "tolerance", p.options.tolerance);
    r.scalar(sec, "max_iter", p.options.max_iter);
    r.scalar(sec, "initial_smoothing", p.options.initial_smoothing);
    r.scalar(sec, "final_smoothing", p.options.final_smoothing);
    if (!(p.lambda >= 0.0)) throw ConfigError(sec + ".lambda must be >= 0");
    c.model_specs[name] = spec;
  }
  {
    ModelSpec spec = default_model_spec("qgb", c.seed);
    auto& h = std::get<GbQrSpec>(spec.params).hyper;
    r.scalar("models.qgb", "n_estimators", h.n_estimators);
    r.scalar("models.qgb", "max_depth", h.max_depth);
    r.scalar("models.qgb", "learning_rate", h.learning_rate);
    r.scalar("models.qgb", "subsample", h.subsample_frac);
    r.scalar("models.qgb", "min_samples_leaf", h.min_samples_leaf);
    if (auto v = r.get("models.qgb", "seed")) {
      h.seed = detail::parse_scalar<std::uint64_t>("models.qgb.seed", *v);
      c.qgb_seed_set = true;
    }
    h.validate();
    c.model_specs["qgb"] = spec;
  }

  std::string refit;
  r.scalar("conformal", "refit_every", refit);
  if (refit == "inf" || refit == "never") c.refit_every = 0;
  else if (!refit.empty()) c.refit_every = detail::parse_scalar<std::size_t>("conformal.refit_every", refit);
  r.scalar("conformal", "horizon", c.horizon);
  r.list("conformal", "aci_gammas", c.aci_gammas);
  r.list("conformal", "agaci_gammas", c.agaci_gammas);
  r.scalar("conformal", "aci_engine", c.aci_engine);

  r.scalar("aggregation", "gradient_trick", c.gradient_trick);
  r.scalar("aggregation", "uniform_base", c.uniform_base);

  r.scalar("evaluation", "block_len", c.block_len);
  r.scalar("evaluation", "n_boot", c.n_boot);

  auto& g = c.gridsearch;
  r.list("gridsearch", "lasso_lambdas", g.lasso_lambdas);
  r.list("gridsearch", "qgb_n_estimators", g.qgb_n_estimators);
  r.list("gridsearch", "qgb_max_depth", g.qgb_max_depth);
  r.list("gridsearch", "qgb_learning_rate", g.qgb_learning_rate);
  r.scalar("gridsearch", "validation_days", g.validation_days);
  r.scalar("gridsearch", "train_days", g.train_days);

  r.reject_unknown();
  c.validate();
  return c;
}

// Replaces the master seed and every seed derived from it.
inline void set_master_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  if (!c.synthetic_seed_set) c.synthetic.seed = seed;
  if (!c.qgb_seed_set) std::get<GbQrSpec>(c.model_specs.at("qgb").params).hyper.seed = seed;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  auto cfg = parse_run_config(in);
  if (!cfg.csv_path.empty() && cfg.csv_path.is_relative())
    cfg.csv_path = path.parent_path() / cfg.csv_path;
  return cfg;
}

}  // namespace epf
