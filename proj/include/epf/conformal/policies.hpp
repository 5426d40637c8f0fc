#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/aggregation/online.hpp"
#include "epf/conformal/engines.hpp"
#include "epf/conformal/interval.hpp"
#include "epf/errors.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

// Turns a fitted pair and calibration scores into an interval, then learns
// from the revealed truth. `observe` always refers to the last issued interval.
class IntervalPolicy {
 public:
  virtual ~IntervalPolicy() = default;
  virtual std::string name() const = 0;
  virtual PredictionInterval issue(const PairPrediction& q, const ScoreWindow& scores) = 0;
  virtual void observe(double y) = 0;
  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;
  virtual std::unique_ptr<IntervalPolicy> clone() const = 0;
};

// Uncorrected [q_lo, q_hi].
class RawPolicy final : public IntervalPolicy {
 public:
  explicit RawPolicy(double alpha) : alpha_(alpha) {}
  std::string name() const override { return "raw"; }
  PredictionInterval issue(const PairPrediction& q, const ScoreWindow&) override {
    return {q.lo, q.hi, 1.0 - alpha_};
  }
  void observe(double) override {}
  nlohmann::json checkpoint() const override { return {{"policy", "raw"}, {"alpha", alpha_}}; }
  void restore(const nlohmann::json& j) override { alpha_ = j.at("alpha").get<double>(); }
  std::unique_ptr<IntervalPolicy> clone() const override { return std::make_unique<RawPolicy>(*this); }

 private:
  double alpha_;
};

// Split-conformal correction at a fixed level.
class FixedLevelPolicy final : public IntervalPolicy {
 public:
  explicit FixedLevelPolicy(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  }
  std::string name() const override { return "fixed"; }
  PredictionInterval issue(const PairPrediction& q, const ScoreWindow& scores) override {
    return conformal_interval(q.lo, q.hi, corrected_quantile(scores, alpha_), 1.0 - alpha_);
  }
  void observe(double) override {}
  nlohmann::json checkpoint() const override { return {{"policy", "fixed"}, {"alpha", alpha_}}; }
  void restore(const nlohmann::json& j) override { alpha_ = j.at("alpha").get<double>(); }
  std::unique_ptr<IntervalPolicy> clone() const override {
    return std::make_unique<FixedLevelPolicy>(*this);
  }

 private:
  double alpha_;
};

struct AciState {
  double alpha_target = 0.1;
  double gamma = 0.0;
  double alpha_t = 0.1;
  std::vector<double> alpha_history;  // alpha_1 .. alpha_t

  static AciState start(double alpha, double gamma) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("aci: alpha must lie in (0, 1)");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("aci: gamma must be >= 0");
    return {alpha, gamma, alpha, {alpha}};
  }
};

// alpha_{t+1} = alpha_t + gamma (alpha - 1{miss}).
inline AciState aci_step(AciState s, bool covered) {
  s.alpha_t = s.alpha_t + s.gamma * (s.alpha_target - (covered ? 0.0 : 1.0));
  s.alpha_history.push_back(s.alpha_t);
  return s;
}

// Interval at effective level alpha_t: the whole line when alpha_t <= 0 and
// the raw pair when alpha_t >= 1.
inline PredictionInterval aci_interval(const PairPrediction& q, const ScoreWindow& scores,
                                       double alpha_t, double level) {
  if (alpha_t <= 0.0) return {-kInf, kInf, level};
  if (alpha_t >= 1.0) return {q.lo, q.hi, level};
  return conformal_interval(q.lo, q.hi, corrected_quantile(scores, alpha_t), level);
}

class AciPolicy final : public IntervalPolicy {
 public:
  AciPolicy(double alpha, double gamma) : state_(AciState::start(alpha, gamma)) {}
  std::string name() const override { return "aci"; }
  const AciState& state() const { return state_; }

  PredictionInterval issue(const PairPrediction& q, const ScoreWindow& scores) override {
    last_ = aci_interval(q, scores, state_.alpha_t, 1.0 - state_.alpha_target);
    return last_;
  }
  void observe(double y) override { state_ = aci_step(std::move(state_), last_.contains(y)); }

  nlohmann::json checkpoint() const override {
    return {{"policy", "aci"},
            {"alpha", state_.alpha_target},
            {"gamma", state_.gamma},
            {"alpha_t", state_.alpha_t},
            {"alpha_history", state_.alpha_history}};
  }
  void restore(const nlohmann::json& j) override {
    state_.alpha_target = j.at("alpha").get<double>();
    state_.gamma = j.at("gamma").get<double>();
    state_.alpha_t = j.at("alpha_t").get<double>();
    state_.alpha_history = j.at("alpha_history").get<std::vector<double>>();
  }
  std::unique_ptr<IntervalPolicy> clone() const override { return std::make_unique<AciPolicy>(*this); }

 private:
  AciState state_;
  PredictionInterval last_;
};

// {0} together with `n - 1` geometrically spaced values in [lo, hi].
inline std::vector<double> default_gamma_grid(std::size_t n = 8, double lo = 1e-4, double hi = 5e-2) {
  if (n < 2) return {0.0};
  std::vector<double> g{0.0};
  const std::size_t m = n - 1;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    g.push_back(lo * std::pow(hi / lo, f));
  }
  return g;
}

// Running clip bound [min - R, max + R] over observed targets, with R the
// interquartile range.
class ClipTracker {
 public:
  ClipTracker() = default;
  explicit ClipTracker(std::span<const double> seed) {
    for (double v : seed) add(v);
  }

  void add(double y) {
    if (!std::isfinite(y)) throw NumericError("clip tracker: non-finite target");
    sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), y), y);
  }
  std::size_t size() const { return sorted_.size(); }

  ClipBound bound() const {
    if (sorted_.empty()) throw Error("clip tracker: no observed targets");
    const double r = empirical_quantile(sorted_, 0.75) - empirical_quantile(sorted_, 0.25);
    double lo = sorted_.front() - r, hi = sorted_.back() + r;
    if (!(lo < hi)) {
      const double pad = 1e-6 * std::max(1.0, std::abs(lo));
      lo -= pad;
      hi += pad;
    }
    return {lo, hi};
  }

  const std::vector<double>& values() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

// AgACI: K ACI experts over a gamma grid; the lower bounds are aggregated at
// pinball level alpha/2 and the upper bounds at 1 - alpha/2 by two independent
// online engines, after clipping into the tracker's bound.
class AgAciPolicy final : public IntervalPolicy {
 public:
  AgAciPolicy(double alpha, std::vector<double> gamma_grid, std::span<const double> seed_targets,
              bool gradient_trick = true)
      : alpha_(alpha),
        tracker_(seed_targets),
        lower_(check_grid(gamma_grid), LossSpec{QuantileLevel(alpha / 2.0), gradient_trick}),
        upper_(gamma_grid.size(), LossSpec{QuantileLevel(1.0 - alpha / 2.0), gradient_trick}) {
    for (double g : gamma_grid) experts_.push_back(AciState::start(alpha, g));
  }

  std::string name() const override { return "agaci"; }
  std::size_t size() const { return experts_.size(); }
  const std::vector<AciState>& experts() const { return experts_; }
  const std::vector<PredictionInterval>& expert_intervals() const { return expert_iv_; }
  const OnlineAggregator& lower_engine() const { return lower_; }
  const OnlineAggregator& upper_engine() const { return upper_; }
  const ClipTracker& tracker() const { return tracker_; }
  ClipBound last_bound() const { return bound_; }
  // Aggregated bounds before the swap repair.
  std::pair<double, double> last_raw_bounds() const { return {raw_lo_, raw_hi_}; }

  PredictionInterval issue(const PairPrediction& q, const ScoreWindow& scores) override {
    const std::size_t k = experts_.size();
    expert_iv_.resize(k);
    std::vector<double> lo(k), hi(k);
    for (std::size_t i = 0; i < k; ++i) {
      expert_iv_[i] = aci_interval(q, scores, experts_[i].alpha_t, 1.0 - alpha_);
      lo[i] = expert_iv_[i].lower;
      hi[i] = expert_iv_[i].upper;
    }
    bound_ = tracker_.bound();
    raw_lo_ = lower_.predict(lo, bound_);
    raw_hi_ = upper_.predict(hi, bound_);
    return {std::min(raw_lo_, raw_hi_), std::max(raw_lo_, raw_hi_), 1.0 - alpha_};
  }

  void observe(double y) override {
    if (expert_iv_.size() != experts_.size()) throw ProtocolError("agaci: truth before an interval");
    for (std::size_t i = 0; i < experts_.size(); ++i)
      experts_[i] = aci_step(std::move(experts_[i]), expert_iv_[i].contains(y));
    lower_.observe(y);
    upper_.observe(y);
    tracker_.add(y);
  }

  nlohmann::json checkpoint() const override {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : experts_)
      ex.push_back({{"gamma", e.gamma}, {"alpha_t", e.alpha_t}, {"alpha_history", e.alpha_history}});
    return {{"policy", "agaci"},           {"alpha", alpha_},
            {"experts", ex},               {"lower", lower_.checkpoint()},
            {"upper", upper_.checkpoint()}, {"targets", tracker_.values()}};
  }
  void restore(const nlohmann::json& j) override {
    alpha_ = j.at("alpha").get<double>();
    experts_.clear();
    for (const auto& e : j.at("experts")) {
      AciState s = AciState::start(alpha_, e.at("gamma").get<double>());
      s.alpha_t = e.at("alpha_t").get<double>();
      s.alpha_history = e.at("alpha_history").get<std::vector<double>>();
      experts_.push_back(std::move(s));
    }
    lower_.restore(j.at("lower"));
    upper_.restore(j.at("upper"));
    tracker_ = ClipTracker(j.at("targets").get<std::vector<double>>());
    expert_iv_.clear();
  }
  std::unique_ptr<IntervalPolicy> clone() const override { return std::make_unique<AgAciPolicy>(*this); }

 private:
  static std::size_t check_grid(const std::vector<double>& g) {
    if (g.empty()) throw ConfigError("agaci: empty gamma grid");
    return g.size();
  }

  double alpha_;
  ClipTracker tracker_;
  OnlineAggregator lower_;
  OnlineAggregator upper_;
  std::vector<AciState> experts_;
  std::vector<PredictionInterval> expert_iv_;
  ClipBound bound_;
  double raw_lo_ = 0.0, raw_hi_ = 0.0;
};

// Enforces issue-then-reveal on a single stream.
class ProtocolGuard {
 public:
  void on_issue() {
    if (pending_) throw ProtocolError("interval already issued; its truth has not been revealed");
    pending_ = true;
  }
  void on_reveal() {
    if (!pending_) throw ProtocolError("truth delivered before the interval was issued");
    pending_ = false;
  }
  bool pending() const { return pending_; }

 private:
  bool pending_ = false;
};

inline constexpr int kStateSchemaVersion = 1;

// One online conformal method: an engine for the pair and scores plus a policy
// for the interval, driven strictly as issue(x) then observe(y).
class OnlineConformal {
 public:
  OnlineConformal(std::unique_ptr<ConformalEngine> engine, std::unique_ptr<IntervalPolicy> policy)
      : engine_(std::move(engine)), policy_(std::move(policy)) {}

  PredictionInterval issue(std::span<const double> x) {
    guard_.on_issue();
    x_.assign(x.begin(), x.end());
    try {
      return policy_->issue(engine_->predict(x), engine_->scores());
    } catch (...) {
      guard_ = ProtocolGuard{};
      throw;
    }
  }

  void observe(double y) {
    guard_.on_reveal();
    policy_->observe(y);
    engine_->update(x_, y);
  }

  const ConformalEngine& engine() const { return *engine_; }
  const IntervalPolicy& policy() const { return *policy_; }

  nlohmann::json checkpoint() const {
    if (guard_.pending()) throw ProtocolError("cannot checkpoint while a truth is pending");
    return {{"schema_version", kStateSchemaVersion},
            {"engine", engine_->checkpoint()},
            {"policy", policy_->checkpoint()}};
  }

 private:
  std::unique_ptr<ConformalEngine> engine_;
  std::unique_ptr<IntervalPolicy> policy_;
  ProtocolGuard guard_;
  std::vector<double> x_;
};

// Rebuilds an OnlineConformal from a checkpoint. The pair fitter is not
// serialized and must be supplied again.
inline OnlineConformal restore_online_conformal(const nlohmann::json& j, PairFitter fitter) {
  if (j.value("schema_version", 0) != kStateSchemaVersion) throw Error("unsupported state schema version");
  const auto& e = j.at("engine");
  const auto kind = e.at("kind").get<std::string>();
  std::unique_ptr<ConformalEngine> engine;
  if (kind == "osscp")
    engine = SequentialSplitEngine::from_checkpoint(e, std::move(fitter));
  else if (kind == "osscp_horizon")
    engine = HorizonEngine::from_checkpoint(e, std::move(fitter));
  else
    throw Error("cannot restore engine kind '" + kind + "'");

  const auto& p = j.at("policy");
  const auto name = p.at("policy").get<std::string>();
  const double alpha = p.at("alpha").get<double>();
  std::unique_ptr<IntervalPolicy> policy;
  if (name == "raw") {
    policy = std::make_unique<RawPolicy>(alpha);
  } else if (name == "fixed") {
    policy = std::make_unique<FixedLevelPolicy>(alpha);
  } else if (name == "aci") {
    policy = std::make_unique<AciPolicy>(alpha, p.at("gamma").get<double>());
  } else if (name == "agaci") {
    std::vector<double> grid;
    for (const auto& x : p.at("experts")) grid.push_back(x.at("gamma").get<double>());
    const auto targets = p.at("targets").get<std::vector<double>>();
    policy = std::make_unique<AgAciPolicy>(alpha, grid, targets);
  } else {
    throw Error("unknown policy '" + name + "'");
  }
  policy->restore(p);
  return OnlineConformal(std::move(engine), std::move(policy));
}

}  // namespace epf
