#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/errors.hpp"
#include "epf/models/quantile_model.hpp"
#include "epf/pipeline/backtest.hpp"
#include "epf/pipeline/report.hpp"
#include "epf/pipeline/config.hpp"

namespace epf {

struct GridCandidate {
  ModelSpec spec;
  nlohmann::json params;
  double score = 0.0;  // mean validation pinball
};

struct ModelSelection {
  std::string model;
  std::vector<GridCandidate> candidates;
  std::size_t selected = 0;
};

struct GridSearchReport {
  std::vector<ModelSelection> models;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
};

inline std::vector<GridCandidate> grid_candidates(const RunConfig& cfg, const std::string& model) {
  std::vector<GridCandidate> out;
  const auto it = cfg.model_specs.find(model);
  if (it == cfg.model_specs.end()) throw ConfigError("grid search: unknown base model '" + model + "'");
  const ModelSpec base = it->second;
  if (model == "linear_qr") {
    const auto& p = std::get<LinearQrSpec>(base.params);
    out.push_back({base, {{"lambda", p.lambda}}, 0.0});
  } else if (model == "lasso_qr") {
    for (double l : cfg.gridsearch.lasso_lambdas) {
      ModelSpec s = base;
      std::get<LinearQrSpec>(s.params).lambda = l;
      out.push_back({s, {{"lambda", l}}, 0.0});
    }
  } else if (model == "qgb") {
    for (auto n : cfg.gridsearch.qgb_n_estimators)
      for (auto d : cfg.gridsearch.qgb_max_depth)
        for (double lr : cfg.gridsearch.qgb_learning_rate) {
          ModelSpec s = base;
          auto& h = std::get<GbQrSpec>(s.params).hyper;
          h.n_estimators = n;
          h.max_depth = d;
          h.learning_rate = lr;
          h.validate();
          out.push_back({s, {{"n_estimators", n}, {"max_depth", d}, {"learning_rate", lr}}, 0.0});
        }
  } else {
    throw ConfigError("grid search: unknown base model '" + model + "'");
  }
  if (out.empty()) throw ConfigError("grid search: empty grid for " + model);
  return out;
}

// Orders candidates by validation score, breaking ties toward the simpler
// model: larger lambda, then fewer trees, then shallower trees.
inline bool candidate_better(const GridCandidate& a, const GridCandidate& b) {
  const double tol = 1e-12 * std::max({1.0, std::abs(a.score), std::abs(b.score)});
  if (a.score < b.score - tol) return true;
  if (b.score < a.score - tol) return false;
  const double la = a.params.value("lambda", 0.0), lb = b.params.value("lambda", 0.0);
  if (la != lb) return la > lb;
  const auto na = a.params.value("n_estimators", std::size_t{0}), nb = b.params.value("n_estimators", std::size_t{0});
  if (na != nb) return na < nb;
  const auto da = a.params.value("max_depth", std::size_t{0}), db = b.params.value("max_depth", std::size_t{0});
  return da < db;
}

// Fits every candidate on the training days and scores it on the validation
// days that immediately precede the test range. The score averages the mean
// pinball over hours and over the quantile levels alpha/2 and 1 - alpha/2 of
// every target level.
inline GridSearchReport grid_search(const RunConfig& cfg, const PreparedData& data) {
  const auto& g = cfg.gridsearch;
  if (g.validation_days == 0 || g.train_days < 2) throw ConfigError("grid search: empty train or validation range");
  if (data.test_start_day < g.validation_days + g.train_days)
    throw InsufficientHistoryError(g.validation_days + g.train_days, data.test_start_day);
  const std::size_t val_day = data.test_start_day - g.validation_days;
  const std::size_t train_day = val_day - g.train_days;

  std::vector<double> betas;
  for (double l : cfg.levels) {
    betas.push_back((1.0 - l) / 2.0);
    betas.push_back(1.0 - (1.0 - l) / 2.0);
  }
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());

  GridSearchReport rep;
  for (const auto& model : cfg.base_models) {
    ModelSelection sel;
    sel.model = model;
    sel.candidates = grid_candidates(cfg, model);
    for (auto& cand : sel.candidates) {
      double total = 0.0;
      std::size_t count = 0;
      for (int hour : cfg.hours) {
        const auto& s = data.series.at(hour);
        const std::size_t a = first_row_at_or_after(s, train_day);
        const std::size_t b = first_row_at_or_after(s, val_day);
        const std::size_t c = first_row_at_or_after(s, data.test_start_day);
        if (b - a < 2 || c == b) throw InsufficientHistoryError(2, b - a);
        const Matrix Xt = s.X.slice_rows(a, b - a);
        const std::span<const double> yt(s.y.data() + a, b - a);
        rep.train_rows = b - a;
        rep.validation_rows = c - b;
        for (double beta : betas) {
          const auto m = fit_model(cand.spec, Xt, yt, QuantileLevel(beta));
          double loss = 0.0;
          for (std::size_t i = b; i < c; ++i) loss += pinball_loss(s.y[i], predict(m, s.X.row(i)), QuantileLevel(beta));
          total += loss / static_cast<double>(c - b);
          ++count;
        }
      }
      cand.score = total / static_cast<double>(count);
    }
    for (std::size_t i = 1; i < sel.candidates.size(); ++i)
      if (candidate_better(sel.candidates[i], sel.candidates[sel.selected])) sel.selected = i;
    rep.models.push_back(std::move(sel));
  }
  return rep;
}

inline nlohmann::json selection_to_json(const GridSearchReport& rep) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& m : rep.models) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : m.candidates) cands.push_back({{"params", c.params}, {"score", c.score}});
    models[m.model] = {{"selected", m.candidates[m.selected].params},
                       {"score", m.candidates[m.selected].score},
                       {"candidates", cands}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"criterion", "mean validation pinball"},
          {"train_rows", rep.train_rows},
          {"validation_rows", rep.validation_rows},
          {"models", models}};
}

}  // namespace epf
