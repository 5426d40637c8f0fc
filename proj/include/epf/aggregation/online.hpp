#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/aggregation/boa.hpp"
#include "epf/errors.hpp"
#include "epf/matrix.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

struct LossSpec {
  QuantileLevel beta{0.5};
  bool gradient_trick = true;
};

// Predictions of K experts over time for one quantile level or bound.
struct ExpertPanel {
  std::vector<std::string> expert_ids;
  Matrix predictions;  // steps x K

  void validate() const {
    if (expert_ids.empty()) throw ConfigError("expert panel has no experts");
    if (predictions.rows() > 0 && predictions.cols() != expert_ids.size())
      throw DimensionError("expert panel: column count differs from expert ids");
    for (std::size_t t = 0; t < predictions.rows(); ++t)
      for (std::size_t k = 0; k < predictions.cols(); ++k)
        if (std::isnan(predictions(t, k)))
          throw NumericError("expert '" + expert_ids[k] + "' missing at step " + std::to_string(t));
  }
};

// Streaming per-level aggregation engine: predict (clip, then weight), then
// observe the truth, which updates the rule. Weights used at step t only
// depend on truths revealed before t.
class OnlineAggregator {
 public:
  OnlineAggregator(std::size_t k, LossSpec spec, std::unique_ptr<AggregationRule> rule = nullptr)
      : spec_(spec), rule_(rule ? std::move(rule) : std::make_unique<BoaRule>(k)) {
    if (k == 0) throw ConfigError("aggregation needs at least one expert");
    if (rule_->size() != k) throw DimensionError("aggregation rule size differs from K");
  }
  OnlineAggregator(const OnlineAggregator& o)
      : spec_(o.spec_), rule_(o.rule_->clone()), pending_(o.pending_), clipped_(o.clipped_),
        aggregate_(o.aggregate_), history_(o.history_) {}
  OnlineAggregator& operator=(const OnlineAggregator& o) {
    if (this != &o) *this = OnlineAggregator(o);
    return *this;
  }
  OnlineAggregator(OnlineAggregator&&) noexcept = default;
  OnlineAggregator& operator=(OnlineAggregator&&) noexcept = default;

  std::size_t size() const { return rule_->size(); }
  const LossSpec& spec() const { return spec_; }
  const AggregationRule& rule() const { return *rule_; }
  const std::vector<double>& weights() const { return rule_->weights(); }
  // Weights applied at each issued step.
  const std::vector<std::vector<double>>& weight_history() const { return history_; }
  const std::vector<double>& last_clipped() const { return clipped_; }
  bool pending() const { return pending_; }

  double predict(std::span<const double> expert_preds, const ClipBound& bound) {
    if (pending_) throw ProtocolError("aggregation: previous prediction still awaits its truth");
    if (expert_preds.size() != size())
      throw DimensionError("aggregation: expected " + std::to_string(size()) + " experts, got " +
                           std::to_string(expert_preds.size()));
    for (std::size_t k = 0; k < expert_preds.size(); ++k)
      if (std::isnan(expert_preds[k]))
        throw NumericError("aggregation: expert " + std::to_string(k) + " is missing");
    clipped_ = clip_experts(expert_preds, bound);
    if (auto* boa = dynamic_cast<BoaRule*>(rule_.get())) {
      const double b = spec_.beta.value();
      boa->raise_loss_range(bound.width() * std::max(b, 1.0 - b));
    }
    const auto& w = rule_->weights();
    double agg = 0.0;
    for (std::size_t k = 0; k < size(); ++k) agg += w[k] * clipped_[k];
    const auto [mn, mx] = std::minmax_element(clipped_.begin(), clipped_.end());
    aggregate_ = std::clamp(agg, *mn, *mx);  // guard against rounding past the envelope
    history_.push_back(w);
    pending_ = true;
    return aggregate_;
  }

  void observe(double y) {
    if (!pending_) throw ProtocolError("aggregation: truth delivered before a prediction");
    if (!std::isfinite(y)) throw NumericError("aggregation: non-finite truth");
    if (spec_.gradient_trick) {
      const auto losses = gradient_trick_loss(clipped_, aggregate_, y, spec_.beta);
      rule_->update(losses, std::nullopt);
    } else {
      std::vector<double> losses(size());
      for (std::size_t k = 0; k < size(); ++k) losses[k] = pinball_loss(y, clipped_[k], spec_.beta);
      rule_->update(losses, pinball_loss(y, aggregate_, spec_.beta));
    }
    pending_ = false;
  }

  nlohmann::json checkpoint() const {
    return {{"beta", spec_.beta.value()}, {"gradient_trick", spec_.gradient_trick},
            {"rule", rule_->checkpoint()}, {"pending", pending_},
            {"clipped", clipped_},         {"aggregate", aggregate_},
            {"history", history_}};
  }

  void restore(const nlohmann::json& j) {
    spec_ = {QuantileLevel(j.at("beta").get<double>()), j.at("gradient_trick").get<bool>()};
    rule_->restore(j.at("rule"));
    pending_ = j.at("pending").get<bool>();
    clipped_ = j.at("clipped").get<std::vector<double>>();
    aggregate_ = j.at("aggregate").get<double>();
    history_ = j.at("history").get<std::vector<std::vector<double>>>();
  }

 private:
  LossSpec spec_;
  std::unique_ptr<AggregationRule> rule_;
  bool pending_ = false;
  std::vector<double> clipped_;
  double aggregate_ = 0.0;
  std::vector<std::vector<double>> history_;
};

struct AggregateRun {
  std::vector<double> aggregates;
  std::vector<std::vector<double>> weight_history;
};

// Runs the aggregator over a full panel with a fixed clip bound.
inline AggregateRun online_aggregate(const ExpertPanel& panel, std::span<const double> truths,
                                     const LossSpec& spec, const ClipBound& bound,
                                     std::unique_ptr<AggregationRule> rule = nullptr) {
  panel.validate();
  if (truths.size() != panel.predictions.rows())
    throw DimensionError("online_aggregate: one truth per step required");
  OnlineAggregator agg(panel.expert_ids.size(), spec, std::move(rule));
  AggregateRun run;
  run.aggregates.reserve(truths.size());
  for (std::size_t t = 0; t < truths.size(); ++t) {
    run.aggregates.push_back(agg.predict(panel.predictions.row(t), bound));
    agg.observe(truths[t]);
  }
  run.weight_history = agg.weight_history();
  return run;
}

}  // namespace epf
