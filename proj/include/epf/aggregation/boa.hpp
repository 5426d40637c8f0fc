#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/errors.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

// Finite, non-degenerate interval used to threshold expert predictions.
struct ClipBound {
  double lo = 0.0;
  double hi = 1.0;
  double width() const noexcept { return hi - lo; }
};

inline void check_clip_bound(const ClipBound& b) {
  if (!std::isfinite(b.lo) || !std::isfinite(b.hi))
    throw ConfigError("clip bound must be finite");
  if (!(b.lo < b.hi)) throw ConfigError("clip bound is degenerate");
}

// Componentwise clamp into the bound; infinities map to the matching end.
inline std::vector<double> clip_experts(std::span<const double> preds, const ClipBound& bound) {
  check_clip_bound(bound);
  std::vector<double> out(preds.begin(), preds.end());
  for (auto& v : out) {
    if (std::isnan(v)) throw NumericError("clip_experts: NaN expert prediction");
    v = std::clamp(v, bound.lo, bound.hi);
  }
  return out;
}

// Linearized pinball losses g * f_k, with g the subgradient of rho_beta at
// the aggregated prediction (1 - beta when y <= agg, -beta otherwise).
inline std::vector<double> gradient_trick_loss(std::span<const double> expert_preds,
                                               double agg_pred, double y, QuantileLevel beta) {
  const double g = (y <= agg_pred ? 1.0 : 0.0) - beta.value();
  std::vector<double> out(expert_preds.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = g * expert_preds[k];
  return out;
}

inline void check_simplex(std::span<const double> w, double tol = 1e-12) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw NumericError("weight vector has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw NumericError("weight vector does not sum to 1");
}

// Weighting rule over K experts. `update` receives each expert's loss for the
// step just revealed; `aggregate_loss` is the loss of the weighted forecast
// and defaults to the weighted mean of expert losses (exact for linearized
// losses).
class AggregationRule {
 public:
  virtual ~AggregationRule() = default;
  virtual std::size_t size() const = 0;
  virtual const std::vector<double>& weights() const = 0;
  virtual void update(std::span<const double> losses, std::optional<double> aggregate_loss) = 0;
  virtual std::string name() const = 0;
  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;
  virtual std::unique_ptr<AggregationRule> clone() const = 0;

 protected:
  static void check_losses(std::span<const double> losses, std::size_t k) {
    if (losses.size() != k)
      throw DimensionError("aggregation: expected " + std::to_string(k) + " losses, got " +
                           std::to_string(losses.size()));
    for (std::size_t i = 0; i < k; ++i) {
      if (!std::isfinite(losses[i]))
        throw NumericError("aggregation: non-finite loss for expert " + std::to_string(i));
    }
  }
  static double weighted_mean(std::span<const double> w, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * v[i];
    return s;
  }
};

// Bernstein Online Aggregation with one adaptive learning rate per expert,
// following the update used by the opera R package:
//
//   r_k   = loss(aggregate) - loss_k           (instantaneous regret)
//   B_k   = max(B_k, |r_k|),  V_k += r_k^2
//   eta_k = min(1 / (2 B_k), sqrt(log(1 / pi_k) / V_k))
//   R_k  += (r_k - eta_k r_k^2 + B_k [eta_k r_k > 1/2]) / 2
//   w_k  ∝ eta_k * pi_k * exp(eta_k R_k)
//
// pi is the prior (uniform). B_k never drops below the loss range set by
// raise_loss_range (derived from the clip bound by callers). Until every
// expert has a finite learning rate the weights stay uniform.
class BoaRule final : public AggregationRule {
 public:
  explicit BoaRule(std::size_t k) : BoaRule(std::vector<double>(k, 1.0 / static_cast<double>(k))) {}

  explicit BoaRule(std::vector<double> prior)
      : prior_(std::move(prior)),
        weights_(prior_),
        regret_reg_(prior_.size(), 0.0),
        range_(prior_.size(), 0.0),
        variance_(prior_.size(), 0.0),
        eta_(prior_.size(), std::numeric_limits<double>::infinity()) {
    if (prior_.empty()) throw ConfigError("BOA needs at least one expert");
    check_simplex(prior_, 1e-9);
    double s = 0.0;
    for (double v : prior_) s += v;
    for (auto& v : prior_) v /= s;
    weights_ = prior_;
  }

  std::size_t size() const override { return prior_.size(); }
  const std::vector<double>& weights() const override { return weights_; }
  std::string name() const override { return "boa"; }
  const std::vector<double>& learning_rates() const { return eta_; }
  std::size_t steps() const { return steps_; }

  void raise_loss_range(double range) {
    if (!std::isfinite(range) || range < 0.0) throw NumericError("BOA: invalid loss range");
    for (auto& b : range_) b = std::max(b, range);
  }

  void update(std::span<const double> losses, std::optional<double> aggregate_loss) override {
    const std::size_t k = size();
    check_losses(losses, k);
    ++steps_;
    if (k == 1) return;  // weight is identically 1
    const double agg = aggregate_loss ? *aggregate_loss : weighted_mean(weights_, losses);
    if (!std::isfinite(agg)) throw NumericError("aggregation: non-finite aggregate loss");

    bool all_finite = true;
    for (std::size_t i = 0; i < k; ++i) {
      const double r = agg - losses[i];
      range_[i] = std::max(range_[i], std::abs(r));
      variance_[i] += r * r;
      const double cap = range_[i] > 0.0 ? 1.0 / (2.0 * range_[i])
                                         : std::numeric_limits<double>::infinity();
      const double adaptive = variance_[i] > 0.0 ? std::sqrt(std::log(1.0 / prior_[i]) / variance_[i])
                                                 : std::numeric_limits<double>::infinity();
      eta_[i] = std::min(cap, adaptive);
      if (std::isfinite(eta_[i])) {
        regret_reg_[i] += 0.5 * (r - eta_[i] * r * r + (eta_[i] * r > 0.5 ? range_[i] : 0.0));
      } else {
        all_finite = false;
      }
    }
    if (!all_finite) {
      std::fill(weights_.begin(), weights_.end(), 1.0 / static_cast<double>(k));
      return;
    }
    std::vector<double> logw(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      logw[i] = eta_[i] > 0.0 ? std::log(eta_[i]) + std::log(prior_[i]) + eta_[i] * regret_reg_[i]
                              : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, logw[i]);
    }
    if (!std::isfinite(mx)) {
      std::fill(weights_.begin(), weights_.end(), 1.0 / static_cast<double>(k));
      return;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      weights_[i] = std::exp(logw[i] - mx);
      s += weights_[i];
    }
    for (auto& w : weights_) w /= s;
  }

  nlohmann::json checkpoint() const override {
    auto enc = [](const std::vector<double>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
      return a;
    };
    return {{"rule", "boa"},          {"prior", prior_},         {"weights", weights_},
            {"regret_reg", regret_reg_}, {"range", range_},     {"variance", variance_},
            {"eta", enc(eta_)},       {"steps", steps_}};
  }

  void restore(const nlohmann::json& j) override {
    if (j.at("rule").get<std::string>() != "boa") throw Error("checkpoint is not a BOA state");
    prior_ = j.at("prior").get<std::vector<double>>();
    weights_ = j.at("weights").get<std::vector<double>>();
    regret_reg_ = j.at("regret_reg").get<std::vector<double>>();
    range_ = j.at("range").get<std::vector<double>>();
    variance_ = j.at("variance").get<std::vector<double>>();
    eta_.clear();
    for (const auto& e : j.at("eta"))
      eta_.push_back(e.is_null() ? std::numeric_limits<double>::infinity() : e.get<double>());
    steps_ = j.at("steps").get<std::size_t>();
  }

  std::unique_ptr<AggregationRule> clone() const override { return std::make_unique<BoaRule>(*this); }

 private:
  std::vector<double> prior_;
  std::vector<double> weights_;
  std::vector<double> regret_reg_;
  std::vector<double> range_;
  std::vector<double> variance_;
  std::vector<double> eta_;
  std::size_t steps_ = 0;
};

// Exponentially weighted average forecaster with a fixed learning rate.
// Kept as an independent rule to cross-check BOA in tests.
class EwaRule final : public AggregationRule {
 public:
  EwaRule(std::size_t k, double eta)
      : eta_(eta), cumulative_(k, 0.0), weights_(k, 1.0 / static_cast<double>(k)) {
    if (k == 0) throw ConfigError("EWA needs at least one expert");
    if (!(eta > 0.0)) throw ConfigError("EWA learning rate must be > 0");
  }

  std::size_t size() const override { return weights_.size(); }
  const std::vector<double>& weights() const override { return weights_; }
  std::string name() const override { return "ewa"; }

  void update(std::span<const double> losses, std::optional<double>) override {
    check_losses(losses, size());
    for (std::size_t i = 0; i < size(); ++i) cumulative_[i] += losses[i];
    const double mn = *std::min_element(cumulative_.begin(), cumulative_.end());
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      weights_[i] = std::exp(-eta_ * (cumulative_[i] - mn));
      s += weights_[i];
    }
    for (auto& w : weights_) w /= s;
  }

  nlohmann::json checkpoint() const override {
    return {{"rule", "ewa"}, {"eta", eta_}, {"cumulative", cumulative_}, {"weights", weights_}};
  }
  void restore(const nlohmann::json& j) override {
    if (j.at("rule").get<std::string>() != "ewa") throw Error("checkpoint is not an EWA state");
    eta_ = j.at("eta").get<double>();
    cumulative_ = j.at("cumulative").get<std::vector<double>>();
    weights_ = j.at("weights").get<std::vector<double>>();
  }
  std::unique_ptr<AggregationRule> clone() const override { return std::make_unique<EwaRule>(*this); }

 private:
  double eta_;
  std::vector<double> cumulative_;
  std::vector<double> weights_;
};

// Functional form of one BOA step.
inline std::pair<std::vector<double>, BoaRule> boa_update(BoaRule state,
                                                          std::span<const double> losses) {
  state.update(losses, std::nullopt);
  auto w = state.weights();
  return {std::move(w), std::move(state)};
}

}  // namespace epf
