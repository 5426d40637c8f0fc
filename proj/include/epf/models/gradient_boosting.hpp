#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "epf/errors.hpp"
#include "epf/matrix.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

// Binary regression tree stored as a flat node array; node 0 is the root.
struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      const auto& n = nodes[static_cast<std::size_t>(i)];
      best = std::max(best, d);
      if (n.feature >= 0) {
        stack.push_back({n.left, d + 1});
        stack.push_back({n.right, d + 1});
      }
    }
    return best;
  }
};

struct GbHyperparameters {
  std::size_t n_estimators = 100;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double subsample_frac = 1.0;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_depth < 1) throw ConfigError("qgb: max_depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
      throw ConfigError("qgb: learning_rate must lie in (0, 1]");
    if (!(subsample_frac > 0.0 && subsample_frac <= 1.0))
      throw ConfigError("qgb: subsample_frac must lie in (0, 1]");
    if (min_samples_leaf < 1) throw ConfigError("qgb: min_samples_leaf must be >= 1");
  }
};

struct GBQuantileModel {
  QuantileLevel level{0.5};
  double base_value = 0.0;
  std::vector<RegressionTree> trees;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
  std::size_t n_estimators = 0;
  double subsample_frac = 1.0;
  std::size_t n_features = 0;
  // Mean training pinball loss on the full sample after each stage; entry 0
  // is the constant initialization.
  std::vector<double> training_loss;

  double predict(std::span<const double> x) const {
    if (x.size() != n_features)
      throw DimensionError("boosting model expects " + std::to_string(n_features) +
                           " features, got " + std::to_string(x.size()));
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return base_value + learning_rate * s;
  }
};

namespace detail {

struct TreeBuilder {
  const Matrix& X;
  const std::vector<double>& gradient;  // negative pinball gradient per row
  const std::vector<double>& residual;  // y - F per row
  double beta;
  std::size_t max_depth;
  std::size_t min_leaf;
  RegressionTree tree;

  int build(std::vector<std::size_t>& rows, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    bool found = false;
    if (depth < max_depth && rows.size() >= 2 * min_leaf) {
      double total = 0.0;
      for (auto r : rows) total += gradient[r];
      const double n = static_cast<double>(rows.size());
      const double parent = total * total / n;
      std::vector<std::size_t> order(rows);
      for (std::size_t f = 0; f < X.cols(); ++f) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double xa = X(a, f), xb = X(b, f);
          return xa < xb || (xa == xb && a < b);
        });
        double left_sum = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          left_sum += gradient[order[k]];
          const double xl = X(order[k], f), xr = X(order[k + 1], f);
          const std::size_t nl = k + 1, nr = order.size() - nl;
          if (xl == xr || nl < min_leaf || nr < min_leaf) continue;
          const double right_sum = total - left_sum;
          // Variance reduction on the gradient targets.
          const double gain = left_sum * left_sum / static_cast<double>(nl) +
                              right_sum * right_sum / static_cast<double>(nr) - parent;
          if (gain > best_gain + 1e-12 * (1.0 + std::abs(best_gain))) {
            best_gain = gain;
            best_feature = f;
            best_threshold = 0.5 * (xl + xr);
            found = true;
          }
        }
      }
    }

    if (!found) {
      std::vector<double> res;
      res.reserve(rows.size());
      for (auto r : rows) res.push_back(residual[r]);
      tree.nodes[static_cast<std::size_t>(id)].value = empirical_quantile(std::move(res), beta);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows) (X(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int rgt = build(right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best_feature);
    node.threshold = best_threshold;
    node.left = l;
    node.right = rgt;
    return id;
  }
};

}  // namespace detail

// Quantile gradient boosting: starts from the empirical beta-quantile of y,
// then each stage fits a regression tree to the negative pinball gradient on
// a seeded subsample and sets every leaf to the beta-quantile of the in-leaf
// residuals.
inline GBQuantileModel fit_gradient_boosting_qr(const Matrix& X, std::span<const double> y,
                                                QuantileLevel beta,
                                                const GbHyperparameters& hyper = {}) {
  hyper.validate();
  const std::size_t n = X.rows();
  if (n == 0) throw NumericError("fit_gradient_boosting_qr: empty series");
  if (y.size() != n) throw DimensionError("fit_gradient_boosting_qr: X and y lengths differ");

  GBQuantileModel model;
  model.level = beta;
  model.learning_rate = hyper.learning_rate;
  model.max_depth = hyper.max_depth;
  model.n_estimators = hyper.n_estimators;
  model.subsample_frac = hyper.subsample_frac;
  model.n_features = X.cols();
  model.base_value = empirical_quantile(y, beta.value());

  std::vector<double> F(n, model.base_value), gradient(n), residual(n);
  auto training_loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += pinball_loss(y[i], F[i], beta);
    return s / static_cast<double>(n);
  };
  model.training_loss.push_back(training_loss());

  std::mt19937_64 rng(hyper.seed);
  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(hyper.subsample_frac * static_cast<double>(n))));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});

  for (std::size_t stage = 0; stage < hyper.n_estimators; ++stage) {
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = y[i] - F[i];
      gradient[i] = beta.value() - (y[i] <= F[i] ? 1.0 : 0.0);
    }
    std::vector<std::size_t> rows;
    if (m == n) {
      rows = all;
    } else {
      std::vector<std::size_t> perm = all;
      std::shuffle(perm.begin(), perm.end(), rng);
      rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
      std::sort(rows.begin(), rows.end());
    }
    detail::TreeBuilder builder{X, gradient, residual, beta.value(), hyper.max_depth,
                                hyper.min_samples_leaf, {}};
    builder.build(rows, 0);
    for (std::size_t i = 0; i < n; ++i) F[i] += hyper.learning_rate * builder.tree.predict(X.row(i));
    model.trees.push_back(std::move(builder.tree));
    model.training_loss.push_back(training_loss());
  }
  return model;
}

}  // namespace epf
