#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "epf/errors.hpp"
#include "epf/matrix.hpp"
#include "epf/models/gradient_boosting.hpp"
#include "epf/models/linear_qr.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

// Predicts the same value everywhere. Used for degenerate streams and tests.
struct ConstantQuantileModel {
  QuantileLevel level{0.5};
  double value = 0.0;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const {
    if (x.size() != n_features)
      throw DimensionError("constant model expects " + std::to_string(n_features) +
                           " features, got " + std::to_string(x.size()));
    return value;
  }
};

using QuantileModel = std::variant<ConstantQuantileModel, LinearQuantileModel, GBQuantileModel>;

inline double predict(const QuantileModel& m, std::span<const double> x) {
  return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

inline QuantileLevel level_of(const QuantileModel& m) {
  return std::visit([](const auto& model) { return model.level; }, m);
}

inline std::size_t feature_dim(const QuantileModel& m) {
  return std::visit(
      [](const auto& model) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, LinearQuantileModel>)
          return model.coefficients.size();
        else
          return model.n_features;
      },
      m);
}

// Hyperparameters of a base forecaster. The three kinds are the toolkit's
// base learners: plain linear QR, Lasso QR and quantile gradient boosting.
struct LinearQrSpec {
  double lambda = 0.0;
  LinearQrOptions options;
};

struct GbQrSpec {
  GbHyperparameters hyper;
};

struct ModelSpec {
  std::string name;  // e.g. "linear_qr", "lasso_qr", "qgb"
  std::variant<LinearQrSpec, GbQrSpec> params;
};

// Fits `spec` at level `beta`. A previous model of the same kind may seed a
// linear fit; boosting always starts from scratch.
inline QuantileModel fit_model(const ModelSpec& spec, const Matrix& X, std::span<const double> y,
                               QuantileLevel beta, const QuantileModel* warm = nullptr) {
  return std::visit(
      [&](const auto& p) -> QuantileModel {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LinearQrSpec>) {
          const auto* prev = warm ? std::get_if<LinearQuantileModel>(warm) : nullptr;
          if (prev && prev->coefficients.size() != X.cols()) prev = nullptr;
          return fit_linear_qr(X, y, beta, p.lambda, p.options, prev);
        } else {
          return fit_gradient_boosting_qr(X, y, beta, p.hyper);
        }
      },
      spec.params);
}

struct QuantileSetForecast {
  std::vector<double> levels;  // strictly ascending
  std::vector<double> values;
};

// Sorts the predicted values so they are nondecreasing in the level.
inline std::vector<double> reorder_quantiles(std::vector<double> values,
                                             std::span<const double> levels) {
  if (values.size() != levels.size())
    throw DimensionError("reorder_quantiles: one value per level required");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i - 1] < levels[i]))
      throw ConfigError("reorder_quantiles: levels must be strictly ascending");
  }
  std::sort(values.begin(), values.end());
  return values;
}

// Evaluates each model at x and repairs crossing. Models must be given in
// ascending level order.
inline QuantileSetForecast predict_quantiles(std::span<const QuantileModel> models,
                                             std::span<const double> x) {
  QuantileSetForecast out;
  out.levels.reserve(models.size());
  out.values.reserve(models.size());
  for (const auto& m : models) {
    if (feature_dim(m) != x.size())
      throw DimensionError("predict_quantiles: model expects " + std::to_string(feature_dim(m)) +
                           " features, got " + std::to_string(x.size()));
    out.levels.push_back(level_of(m).value());
    out.values.push_back(predict(m, x));
  }
  out.values = reorder_quantiles(std::move(out.values), out.levels);
  return out;
}

}  // namespace epf
