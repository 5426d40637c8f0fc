#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "epf/errors.hpp"

namespace epf {

class QuantileLevel {
 public:
  explicit QuantileLevel(double beta) : beta_(beta) {
    if (!(beta > 0.0 && beta < 1.0))
      throw ConfigError("quantile level must lie in (0, 1), got " + std::to_string(beta));
  }
  double value() const noexcept { return beta_; }
  friend bool operator==(const QuantileLevel&, const QuantileLevel&) = default;
  friend auto operator<=>(const QuantileLevel&, const QuantileLevel&) = default;

 private:
  double beta_;
};

// rho_beta(y - y_hat): (1 - beta)|y - y_hat| below the prediction, beta|y - y_hat| above.
inline double pinball_loss(double y, double y_hat, QuantileLevel beta) {
  const double r = y - y_hat;
  return r >= 0.0 ? beta.value() * r : (beta.value() - 1.0) * r;
}

inline double mean_pinball(std::span<const double> y, std::span<const double> y_hat,
                           QuantileLevel beta) {
  if (y.size() != y_hat.size()) throw DimensionError("mean_pinball: length mismatch");
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += pinball_loss(y[i], y_hat[i], beta);
  return s / static_cast<double>(y.size());
}

// Lower empirical beta-quantile: the ceil(beta * n)-th smallest value. It is a
// minimizer of the summed pinball loss over constants.
inline double empirical_quantile(std::vector<double> values, double beta) {
  if (values.empty()) throw Error("empirical_quantile of an empty sample");
  const auto n = values.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n) - 1e-12));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

inline double empirical_quantile(std::span<const double> values, double beta) {
  return empirical_quantile(std::vector<double>(values.begin(), values.end()), beta);
}

}  // namespace epf
