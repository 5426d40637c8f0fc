#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "epf/models/model_json.hpp"
#include "epf/models/quantile_model.hpp"

using namespace epf;

namespace {

struct LinearData {
  Matrix X;
  std::vector<double> y;
};

LinearData uniform_line(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), ue(-1.0, 1.0);
  LinearData d{Matrix(n, 1), {}};
  for (std::size_t i = 0; i < n; ++i) {
    d.X(i, 0) = ux(rng);
    d.y.push_back(2.0 * d.X(i, 0) + ue(rng));
  }
  return d;
}

// Sort-based order statistic, kept apart from the library's nth_element path.
double sorted_lower_quantile(std::vector<double> v, double beta) {
  std::sort(v.begin(), v.end());
  const double k = std::ceil(beta * static_cast<double>(v.size()));
  return v[static_cast<std::size_t>(std::max(1.0, k)) - 1];
}

}  // namespace

TEST(Pinball, HandEvaluatedBranches) {
  EXPECT_NEAR(pinball_loss(1.0, 0.0, QuantileLevel(0.9)), 0.9, 1e-15);
  EXPECT_NEAR(pinball_loss(0.0, 1.0, QuantileLevel(0.9)), 0.1, 1e-15);
  for (double b : {0.05, 0.5, 0.95}) EXPECT_EQ(pinball_loss(7.3, 7.3, QuantileLevel(b)), 0.0);
}

TEST(Pinball, LevelOutsideUnitIntervalIsRejected) {
  EXPECT_THROW(QuantileLevel(0.0), ConfigError);
  EXPECT_THROW(QuantileLevel(1.0), ConfigError);
  EXPECT_THROW(QuantileLevel(std::nan("")), ConfigError);
}

TEST(Pinball, FiniteDifferenceSubgradient) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0), ub(0.01, 0.99);
  for (int i = 0; i < 500; ++i) {
    const double y = u(rng), yh = u(rng);
    const QuantileLevel b(ub(rng));
    if (std::abs(y - yh) < 1e-3) continue;
    const double h = 1e-6;
    const double fd = (pinball_loss(y, yh + h, b) - pinball_loss(y, yh - h, b)) / (2 * h);
    const double expected = (y <= yh ? 1.0 : 0.0) - b.value();
    EXPECT_NEAR(fd, expected, 1e-6);
    // Convexity along the segment.
    const double a = u(rng), c = u(rng);
    EXPECT_LE(pinball_loss(y, 0.5 * (a + c), b),
              0.5 * (pinball_loss(y, a, b) + pinball_loss(y, c, b)) + 1e-12);
  }
}

TEST(LinearQr, MedianOfUniformNoise) {
  const auto d = uniform_line(5000, 11);
  const auto m = fit_linear_qr(d.X, d.y, QuantileLevel(0.5), 0.0);
  EXPECT_NEAR(m.coefficients[0], 2.0, 0.05);
  EXPECT_NEAR(m.intercept, 0.0, 0.05);
  EXPECT_EQ(m.n_features(), 1u);
}

TEST(LinearQr, UpperQuantileOfUniformNoise) {
  const auto d = uniform_line(5000, 11);
  const auto m = fit_linear_qr(d.X, d.y, QuantileLevel(0.9), 0.0);
  EXPECT_NEAR(m.coefficients[0], 2.0, 0.05);
  EXPECT_NEAR(m.intercept, 0.8, 0.05);
}

TEST(LinearQr, HugePenaltyShrinksToEmpiricalQuantile) {
  // 997 rows so beta * n is never an integer and the quantile is unique.
  const auto d = uniform_line(997, 5);
  for (double beta : {0.1, 0.5, 0.9}) {
    const auto m = fit_linear_qr(d.X, d.y, QuantileLevel(beta), 1e6);
    EXPECT_EQ(m.coefficients[0], 0.0);
    EXPECT_NEAR(m.intercept, sorted_lower_quantile(d.y, beta), 1e-9);
  }
}

TEST(LinearQr, LassoZeroesIrrelevantFeatures) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 2000;
  Matrix X(n, 5);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 5; ++j) X(i, j) = g(rng);
    y[i] = 3.0 * X(i, 0) + g(rng);
  }
  const auto plain = fit_linear_qr(X, y, QuantileLevel(0.5), 0.0);
  const auto lasso = fit_linear_qr(X, y, QuantileLevel(0.5), 0.1);
  for (std::size_t j = 1; j < 5; ++j) {
    EXPECT_EQ(lasso.coefficients[j], 0.0) << j;
    EXPECT_NE(plain.coefficients[j], 0.0) << j;
  }
  EXPECT_GT(lasso.coefficients[0], 2.5);
  EXPECT_LT(lasso.coefficients[0], plain.coefficients[0]);
}

TEST(LinearQr, FirstOrderConditionFractionBelow) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 4000, p = 3;
  Matrix X(n, p);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      X(i, j) = g(rng);
      s += (j + 1.0) * X(i, j);
    }
    y[i] = s + 2.0 * g(rng);
  }
  for (double beta : {0.1, 0.3, 0.75}) {
    const auto m = fit_linear_qr(X, y, QuantileLevel(beta), 0.0);
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) below += y[i] < m.predict(X.row(i)) ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(below) / n, beta, 3.0 * (p + 1.0) / n + 2e-3);
    EXPECT_TRUE(m.diagnostics.converged);
  }
}

TEST(LinearQr, ObjectiveNotWorseThanBruteForceOracle) {
  // One feature: the optimum passes through two data points, so checking
  // every pair gives the exact minimum.
  const auto d = uniform_line(60, 4);
  const QuantileLevel b(0.3);
  double best = INFINITY;
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t k = i + 1; k < 60; ++k) {
      const double dx = d.X(k, 0) - d.X(i, 0);
      if (dx == 0.0) continue;
      const double slope = (d.y[k] - d.y[i]) / dx, icpt = d.y[i] - slope * d.X(i, 0);
      double s = 0.0;
      for (std::size_t r = 0; r < 60; ++r) s += pinball_loss(d.y[r], icpt + slope * d.X(r, 0), b);
      best = std::min(best, s / 60.0);
    }
  const auto m = fit_linear_qr(d.X, d.y, b, 0.0);
  EXPECT_LE(m.diagnostics.objective, best * (1.0 + 1e-4));
  EXPECT_GE(m.diagnostics.objective, best - 1e-12);
}

TEST(LinearQr, ConstantTargetAndErrors) {
  Matrix X(10, 2);
  for (std::size_t i = 0; i < 10; ++i) X(i, 0) = static_cast<double>(i), X(i, 1) = 1.0;
  std::vector<double> y(10, 4.0);
  const auto m = fit_linear_qr(X, y, QuantileLevel(0.5), 0.0);
  EXPECT_NEAR(m.predict(X.row(3)), 4.0, 1e-6);
  EXPECT_THROW(fit_linear_qr(Matrix(0, 2), std::vector<double>{}, QuantileLevel(0.5), 0.0), NumericError);
  EXPECT_THROW(fit_linear_qr(X, std::vector<double>(9, 1.0), QuantileLevel(0.5), 0.0), DimensionError);
  EXPECT_THROW(fit_linear_qr(X, y, QuantileLevel(0.5), -1.0), ConfigError);
  EXPECT_THROW(m.predict(std::vector<double>{1.0}), DimensionError);
}

TEST(LinearQr, IterationCapSetsFlagButReturnsModel) {
  const auto d = uniform_line(500, 2);
  LinearQrOptions o;
  o.max_iter = 3;
  const auto m = fit_linear_qr(d.X, d.y, QuantileLevel(0.5), 0.0, o);
  EXPECT_FALSE(m.diagnostics.converged);
  EXPECT_LE(m.diagnostics.iterations, 3u);
  EXPECT_EQ(m.coefficients.size(), 1u);
}

TEST(Boosting, ZeroStagesPredictsEmpiricalQuantile) {
  const auto d = uniform_line(301, 9);
  GbHyperparameters h;
  h.n_estimators = 0;
  const auto m = fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.7), h);
  const double q = sorted_lower_quantile(d.y, 0.7);
  EXPECT_EQ(m.base_value, q);
  EXPECT_EQ(m.predict(std::vector<double>{-2.0}), q);
  EXPECT_EQ(m.predict(std::vector<double>{2.5}), q);
}

TEST(Boosting, StumpsRecoverStep) {
  const std::size_t n = 400;
  Matrix X(n, 1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    X(i, 0) = -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / n;
    y[i] = X(i, 0) < 0.0 ? 0.0 : 10.0;
  }
  GbHyperparameters h;
  h.n_estimators = 100;
  h.max_depth = 1;
  const auto m = fit_gradient_boosting_qr(X, y, QuantileLevel(0.5), h);
  for (double x = -0.99; x < 1.0; x += 0.0137) {
    const double want = x < 0.0 ? 0.0 : 10.0;
    if (std::abs(x) < 0.01) continue;
    EXPECT_NEAR(m.predict(std::vector<double>{x}), want, 0.1) << x;
  }
  for (const auto& t : m.trees) EXPECT_LE(t.depth(), 1u);
}

TEST(Boosting, TrainingLossNonincreasingWithFullSample) {
  const auto d = uniform_line(500, 17);
  for (double beta : {0.1, 0.5, 0.9}) {
    GbHyperparameters h;
    h.n_estimators = 60;
    h.max_depth = 3;
    h.learning_rate = 0.1;
    const auto m = fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(beta), h);
    ASSERT_EQ(m.training_loss.size(), 61u);
    for (std::size_t k = 1; k < m.training_loss.size(); ++k)
      EXPECT_LE(m.training_loss[k], m.training_loss[k - 1] + 1e-12) << beta << " stage " << k;
    // Prediction identity: base + lr * sum of tree outputs.
    const std::vector<double> x{0.4};
    double s = 0.0;
    for (const auto& t : m.trees) s += t.predict(x);
    EXPECT_DOUBLE_EQ(m.predict(x), m.base_value + m.learning_rate * s);
    EXPECT_LE(m.trees.size(), h.n_estimators);
  }
}

TEST(Boosting, SeededSubsampleIsDeterministic) {
  const auto d = uniform_line(300, 1);
  GbHyperparameters h;
  h.n_estimators = 30;
  h.subsample_frac = 0.5;
  h.seed = 42;
  const auto a = fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.5), h);
  const auto b = fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.5), h);
  h.seed = 43;
  const auto c = fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.5), h);
  bool differs = false;
  for (double x = -3; x < 3; x += 0.1) {
    const std::vector<double> v{x};
    EXPECT_EQ(a.predict(v), b.predict(v));
    differs = differs || a.predict(v) != c.predict(v);
  }
  EXPECT_TRUE(differs);
}

TEST(Boosting, InvalidHyperparameters) {
  const auto d = uniform_line(10, 1);
  GbHyperparameters h;
  h.subsample_frac = 0.0;
  EXPECT_THROW(fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.5), h), ConfigError);
  h = {};
  h.learning_rate = 1.5;
  EXPECT_THROW(fit_gradient_boosting_qr(d.X, d.y, QuantileLevel(0.5), h), ConfigError);
  EXPECT_THROW(fit_gradient_boosting_qr(Matrix(0, 1), std::vector<double>{}, QuantileLevel(0.5)), NumericError);
}

TEST(QuantileSet, ReorderExamples) {
  const std::vector<double> lv{0.1, 0.5, 0.9};
  EXPECT_EQ(reorder_quantiles({3, 2, 5}, lv), (std::vector<double>{2, 3, 5}));
  EXPECT_EQ(reorder_quantiles({1, 2, 3}, lv), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(reorder_quantiles({4, 4, 4}, lv), (std::vector<double>{4, 4, 4}));
  EXPECT_THROW(reorder_quantiles({1, 2, 3}, std::vector<double>{0.1, 0.1, 0.9}), ConfigError);
}

TEST(QuantileSet, ReorderIsSortedPermutationAndIdempotent) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> lv(9);
  for (std::size_t i = 0; i < 9; ++i) lv[i] = 0.1 * (i + 1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> v(9);
    for (auto& x : v) x = std::round(g(rng) * 3.0);
    const auto r = reorder_quantiles(v, lv);
    EXPECT_TRUE(std::is_sorted(r.begin(), r.end()));
    EXPECT_TRUE(std::is_permutation(r.begin(), r.end(), v.begin()));
    EXPECT_EQ(reorder_quantiles(r, lv), r);
  }
}

TEST(QuantileSet, PredictQuantilesRepairsCrossing) {
  auto constant = [](double beta, double v) {
    return QuantileModel(ConstantQuantileModel{QuantileLevel(beta), v, 2});
  };
  const std::vector<QuantileModel> ms{constant(0.1, 5), constant(0.5, 3), constant(0.9, 8)};
  const std::vector<double> x{0.0, 1.0};
  const auto f = predict_quantiles(ms, x);
  EXPECT_EQ(f.values, (std::vector<double>{3, 5, 8}));
  EXPECT_EQ(f.levels, (std::vector<double>{0.1, 0.5, 0.9}));
  const std::vector<QuantileModel> one{constant(0.5, 7)};
  EXPECT_EQ(predict_quantiles(one, x).values, (std::vector<double>{7}));
  EXPECT_THROW(predict_quantiles(ms, std::vector<double>{1.0}), DimensionError);
}

TEST(QuantileSet, ConstantTargetGivesEqualValues) {
  Matrix X(50, 1);
  for (std::size_t i = 0; i < 50; ++i) X(i, 0) = static_cast<double>(i);
  const std::vector<double> y(50, 3.0);
  ModelSpec gb{"qgb", GbQrSpec{}};
  std::get<GbQrSpec>(gb.params).hyper.n_estimators = 10;
  std::vector<QuantileModel> ms;
  for (double b : {0.1, 0.5, 0.9}) ms.push_back(fit_model(gb, X, y, QuantileLevel(b)));
  const auto f = predict_quantiles(ms, X.row(7));
  for (double v : f.values) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(ModelJson, RoundTripPreservesPredictionsBitwise) {
  const auto d = uniform_line(200, 6);
  ModelSpec lin{"linear_qr", LinearQrSpec{}};
  ModelSpec gb{"qgb", GbQrSpec{}};
  std::get<GbQrSpec>(gb.params).hyper.n_estimators = 20;
  for (const auto& spec : {lin, gb}) {
    const auto m = fit_model(spec, d.X, d.y, QuantileLevel(0.25));
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    for (std::size_t i = 0; i < 200; i += 7) EXPECT_EQ(predict(m, d.X.row(i)), predict(back, d.X.row(i)));
    EXPECT_EQ(level_of(back), QuantileLevel(0.25));
  }
}

TEST(Determinism, RefitIsBitIdentical) {
  const auto d = uniform_line(400, 12);
  const auto a = fit_linear_qr(d.X, d.y, QuantileLevel(0.05), 0.01);
  const auto b = fit_linear_qr(d.X, d.y, QuantileLevel(0.05), 0.01);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.intercept, b.intercept);
}

TEST(LinearQr, ExactSolverMatchesSmoothedSolver) {
  // lambda = 0 takes the interior-point path; a negligible penalty takes the smoothed one.
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 300, p = 6;
  Matrix X(n, p);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.5;
    for (std::size_t j = 0; j < p; ++j) {
      X(i, j) = g(rng);
      s += X(i, j) / (j + 1.0);
    }
    y[i] = s + g(rng);
  }
  for (double beta : {0.05, 0.5, 0.95}) {
    const auto exact = fit_linear_qr(X, y, QuantileLevel(beta), 0.0);
    const auto smooth = fit_linear_qr(X, y, QuantileLevel(beta), 1e-14);
    EXPECT_TRUE(exact.diagnostics.converged);
    EXPECT_LE(exact.diagnostics.objective, smooth.diagnostics.objective + 1e-9);
    EXPECT_NEAR(exact.diagnostics.objective, smooth.diagnostics.objective, 1e-3);
  }
}
