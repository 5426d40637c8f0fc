#pragma once

#include <string>

#include <json.hpp>

#include "epf/errors.hpp"
#include "epf/models/quantile_model.hpp"

namespace epf {

inline constexpr int kModelSchemaVersion = 1;

namespace detail {

inline nlohmann::json tree_to_json(const RegressionTree& t) {
  nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                 left = nlohmann::json::array(), right = nlohmann::json::array(),
                 value = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
          {"value", value}};
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
  RegressionTree t;
  const auto& f = j.at("feature");
  t.nodes.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto& n = t.nodes[i];
    n.feature = f[i].get<int>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<int>();
    n.right = j.at("right")[i].get<int>();
    n.value = j.at("value")[i].get<double>();
  }
  return t;
}

}  // namespace detail

inline nlohmann::json model_to_json(const QuantileModel& model) {
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["level"] = level_of(model).value();
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ConstantQuantileModel>) {
          j["kind"] = "constant";
          j["value"] = m.value;
          j["n_features"] = m.n_features;
        } else if constexpr (std::is_same_v<M, LinearQuantileModel>) {
          j["kind"] = "linear";
          j["coefficients"] = m.coefficients;
          j["intercept"] = m.intercept;
          j["l1_penalty"] = m.l1_penalty;
          j["diagnostics"] = {{"iterations", m.diagnostics.iterations},
                              {"objective", m.diagnostics.objective},
                              {"converged", m.diagnostics.converged}};
        } else {
          j["kind"] = "gradient_boosting";
          j["base_value"] = m.base_value;
          j["learning_rate"] = m.learning_rate;
          j["max_depth"] = m.max_depth;
          j["n_estimators"] = m.n_estimators;
          j["subsample_frac"] = m.subsample_frac;
          j["n_features"] = m.n_features;
          j["training_loss"] = m.training_loss;
          auto trees = nlohmann::json::array();
          for (const auto& t : m.trees) trees.push_back(detail::tree_to_json(t));
          j["trees"] = std::move(trees);
        }
      },
      model);
  return j;
}

inline QuantileModel model_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kModelSchemaVersion)
    throw Error("unsupported model schema version");
  const QuantileLevel level(j.at("level").get<double>());
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    return ConstantQuantileModel{level, j.at("value").get<double>(),
                                 j.at("n_features").get<std::size_t>()};
  }
  if (kind == "linear") {
    LinearQuantileModel m;
    m.level = level;
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.l1_penalty = j.at("l1_penalty").get<double>();
    const auto& d = j.at("diagnostics");
    m.diagnostics = {d.at("iterations").get<std::size_t>(), d.at("objective").get<double>(),
                     d.at("converged").get<bool>()};
    return m;
  }
  if (kind == "gradient_boosting") {
    GBQuantileModel m;
    m.level = level;
    m.base_value = j.at("base_value").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.max_depth = j.at("max_depth").get<std::size_t>();
    m.n_estimators = j.at("n_estimators").get<std::size_t>();
    m.subsample_frac = j.at("subsample_frac").get<double>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.training_loss = j.at("training_loss").get<std::vector<double>>();
    for (const auto& t : j.at("trees")) m.trees.push_back(detail::tree_from_json(t));
    return m;
  }
  throw Error("unknown model kind '" + kind + "'");
}

}  // namespace epf
