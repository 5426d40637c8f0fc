#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epf/conformal/interval.hpp"
#include "epf/dataset/split.hpp"
#include "epf/errors.hpp"
#include "epf/matrix.hpp"
#include "epf/models/model_json.hpp"
#include "epf/models/quantile_model.hpp"

namespace epf {

struct QuantilePair {
  QuantileModel lower;
  QuantileModel upper;
};

struct PairPrediction {
  double lo = 0.0;
  double hi = 0.0;
};

// Evaluates both models and repairs crossing.
inline PairPrediction predict_pair(const QuantilePair& pair, std::span<const double> x) {
  double a = predict(pair.lower, x), b = predict(pair.upper, x);
  if (!std::isfinite(a) || !std::isfinite(b)) throw NumericError("quantile pair predicted a non-finite value");
  if (a > b) std::swap(a, b);
  return {a, b};
}

using PairFitter =
    std::function<QuantilePair(const Matrix&, std::span<const double>, const QuantilePair*)>;

// Fits the (alpha/2, 1 - alpha/2) pair of `spec`.
inline PairFitter make_pair_fitter(ModelSpec spec, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const QuantileLevel lo(alpha / 2.0), hi(1.0 - alpha / 2.0);
  return [spec = std::move(spec), lo, hi](const Matrix& X, std::span<const double> y,
                                          const QuantilePair* warm) {
    return QuantilePair{fit_model(spec, X, y, lo, warm ? &warm->lower : nullptr),
                        fit_model(spec, X, y, hi, warm ? &warm->upper : nullptr)};
  };
}

namespace detail {

// Bounded FIFO of (x, y) observations.
struct History {
  std::size_t capacity = 0;
  std::deque<std::vector<double>> x;
  std::deque<double> y;

  std::size_t size() const { return y.size(); }
  void push(std::span<const double> row, double target) {
    x.emplace_back(row.begin(), row.end());
    y.push_back(target);
    while (y.size() > capacity) {
      x.pop_front();
      y.pop_front();
    }
  }
  // Rows [first, first + count) as a design matrix and target vector.
  std::pair<Matrix, std::vector<double>> slice(std::size_t first, std::size_t count) const {
    Matrix X;
    std::vector<double> t;
    t.reserve(count);
    for (std::size_t i = first; i < first + count; ++i) {
      X.append_row(x[i]);
      t.push_back(y[i]);
    }
    return {std::move(X), std::move(t)};
  }
  nlohmann::json to_json() const {
    return {{"capacity", capacity}, {"x", x}, {"y", y}};
  }
  static History from_json(const nlohmann::json& j) {
    History h;
    h.capacity = j.at("capacity").get<std::size_t>();
    for (const auto& r : j.at("x")) h.x.push_back(r.get<std::vector<double>>());
    for (const auto& v : j.at("y")) h.y.push_back(v.get<double>());
    return h;
  }
};

inline nlohmann::json pair_to_json(const QuantilePair& p) {
  return {{"lower", model_to_json(p.lower)}, {"upper", model_to_json(p.upper)}};
}
inline QuantilePair pair_from_json(const nlohmann::json& j) {
  return {model_from_json(j.at("lower")), model_from_json(j.at("upper"))};
}

inline nlohmann::json scores_to_json(const ScoreWindow& w) {
  return {{"capacity", w.capacity()},
          {"scores", std::vector<double>(w.scores().begin(), w.scores().end())}};
}
inline ScoreWindow scores_from_json(const nlohmann::json& j) {
  ScoreWindow w(j.at("capacity").get<std::size_t>());
  w.assign(j.at("scores").get<std::vector<double>>());
  return w;
}

inline void check_history(const Matrix& X, std::span<const double> y, std::size_t required) {
  if (X.rows() != y.size()) throw DimensionError("history: X and y lengths differ");
  if (X.rows() < required) throw InsufficientHistoryError(required, X.rows());
}

}  // namespace detail

// Produces the fitted quantile pair and the calibration scores that an
// interval policy turns into an interval. `update` is called with each
// revealed observation.
class ConformalEngine {
 public:
  virtual ~ConformalEngine() = default;
  virtual std::string kind() const = 0;
  virtual PairPrediction predict(std::span<const double> x) const = 0;
  virtual const ScoreWindow& scores() const = 0;
  virtual void update(std::span<const double> x, double y) = 0;
  virtual std::size_t fit_count() const = 0;
  virtual nlohmann::json checkpoint() const = 0;
};

struct OsscpConfig {
  std::size_t window = 365;
  double cal_frac = 0.5;
  std::size_t refit_every = 1;  // 0: never refit after initialization
};

// Rolling sequential split: the last `window` observations are divided into
// a training part and the most recent calibration part. After each reveal the
// split slides by one, the pair is refit every `refit_every` steps, and the
// calibration scores are recomputed under the active pair.
class SequentialSplitEngine final : public ConformalEngine {
 public:
  SequentialSplitEngine(OsscpConfig cfg, PairFitter fitter, const Matrix& X_hist,
                        std::span<const double> y_hist)
      : cfg_(cfg), fitter_(std::move(fitter)) {
    n_cal_ = calibration_size(cfg_.window, cfg_.cal_frac);
    if (n_cal_ < 1 || n_cal_ >= cfg_.window) throw ConfigError("osscp: split leaves an empty part");
    detail::check_history(X_hist, y_hist, cfg_.window);
    history_.capacity = cfg_.window;
    const std::size_t first = X_hist.rows() - cfg_.window;
    for (std::size_t i = first; i < X_hist.rows(); ++i) history_.push(X_hist.row(i), y_hist[i]);
    t_ = X_hist.rows();
    scores_ = ScoreWindow(n_cal_);
    refit();
    rescore();
  }

  std::string kind() const override { return "osscp"; }
  const OsscpConfig& config() const { return cfg_; }
  std::size_t calibration_length() const { return n_cal_; }
  // 1-based observation indices of the split used for the next prediction.
  SplitIndices current_split() const { return sequential_split(t_, t_ + 1, cfg_.window, cfg_.cal_frac); }
  const QuantilePair& pair() const { return *pair_; }

  PairPrediction predict(std::span<const double> x) const override { return predict_pair(*pair_, x); }
  const ScoreWindow& scores() const override { return scores_; }
  std::size_t fit_count() const override { return fits_; }

  void update(std::span<const double> x, double y) override {
    history_.push(x, y);
    ++t_;
    ++since_refit_;
    if (cfg_.refit_every > 0 && since_refit_ >= cfg_.refit_every) refit();
    rescore();
  }

  nlohmann::json checkpoint() const override {
    return {{"kind", kind()},
            {"window", cfg_.window},
            {"cal_frac", cfg_.cal_frac},
            {"refit_every", cfg_.refit_every},
            {"t", t_},
            {"since_refit", since_refit_},
            {"fits", fits_},
            {"history", history_.to_json()},
            {"scores", detail::scores_to_json(scores_)},
            {"pair", detail::pair_to_json(*pair_)}};
  }

  static std::unique_ptr<SequentialSplitEngine> from_checkpoint(const nlohmann::json& j,
                                                                PairFitter fitter) {
    auto e = std::unique_ptr<SequentialSplitEngine>(new SequentialSplitEngine());
    e->cfg_ = {j.at("window").get<std::size_t>(), j.at("cal_frac").get<double>(),
               j.at("refit_every").get<std::size_t>()};
    e->fitter_ = std::move(fitter);
    e->n_cal_ = calibration_size(e->cfg_.window, e->cfg_.cal_frac);
    e->t_ = j.at("t").get<std::size_t>();
    e->since_refit_ = j.at("since_refit").get<std::size_t>();
    e->fits_ = j.at("fits").get<std::size_t>();
    e->history_ = detail::History::from_json(j.at("history"));
    e->scores_ = detail::scores_from_json(j.at("scores"));
    e->pair_ = detail::pair_from_json(j.at("pair"));
    return e;
  }

 private:
  SequentialSplitEngine() = default;

  void refit() {
    auto [X, y] = history_.slice(0, cfg_.window - n_cal_);
    pair_ = fitter_(X, y, pair_ ? &*pair_ : nullptr);
    ++fits_;
    since_refit_ = 0;
  }

  void rescore() {
    scores_.clear();
    for (std::size_t i = cfg_.window - n_cal_; i < cfg_.window; ++i) {
      const auto q = predict_pair(*pair_, history_.x[i]);
      scores_.push(cqr_score(history_.y[i], q.lo, q.hi));
    }
  }

  OsscpConfig cfg_;
  PairFitter fitter_;
  std::size_t n_cal_ = 0;
  std::size_t t_ = 0;
  std::size_t since_refit_ = 0;
  std::size_t fits_ = 0;
  detail::History history_;
  ScoreWindow scores_;
  std::optional<QuantilePair> pair_;
};

struct HorizonConfig {
  std::size_t train_len = 180;
  std::size_t cal_len = 180;
  std::size_t horizon = 1;

  void validate() const {
    if (train_len < 2) throw ConfigError("osscp_horizon: train_len must be >= 2");
    if (cal_len < 1) throw ConfigError("osscp_horizon: cal_len must be >= 1");
    if (horizon < 1) throw ConfigError("osscp_horizon: horizon must be >= 1");
    if (horizon >= train_len) throw ConfigError("osscp_horizon: horizon must be < train_len");
  }

  static HorizonConfig from_window(std::size_t window, double cal_frac, std::size_t horizon = 1) {
    const std::size_t n_cal = calibration_size(window, cal_frac);
    if (n_cal < 1 || n_cal >= window) throw ConfigError("osscp_horizon: split leaves an empty part");
    return {window - n_cal, n_cal, horizon};
  }
};

// Each calibration score at time t comes from a pair fitted on observations
// t - train_len .. t - horizon. Only the newest pair is cached: after a reveal
// it scores that observation and one new pair is fitted for the next step.
class HorizonEngine final : public ConformalEngine {
 public:
  HorizonEngine(HorizonConfig cfg, PairFitter fitter, const Matrix& X_hist, std::span<const double> y_hist)
      : cfg_(cfg), fitter_(std::move(fitter)) {
    cfg_.validate();
    detail::check_history(X_hist, y_hist, cfg_.train_len + cfg_.cal_len);
    const std::size_t n = X_hist.rows();
    history_.capacity = cfg_.train_len;
    scores_ = ScoreWindow(cfg_.cal_len);
    const std::size_t fit_rows = cfg_.train_len - cfg_.horizon + 1;
    // Backdated fits for the calibration points n - cal_len .. n - 1 (0-based).
    for (std::size_t j = n - cfg_.cal_len; j < n; ++j) {
      Matrix X;
      std::vector<double> y;
      for (std::size_t i = j - cfg_.train_len; i < j - cfg_.train_len + fit_rows; ++i) {
        X.append_row(X_hist.row(i));
        y.push_back(y_hist[i]);
      }
      pair_ = fitter_(X, y, pair_ ? &*pair_ : nullptr);
      ++fits_;
      const auto q = predict_pair(*pair_, X_hist.row(j));
      scores_.push(cqr_score(y_hist[j], q.lo, q.hi));
    }
    for (std::size_t i = n - cfg_.train_len; i < n; ++i) history_.push(X_hist.row(i), y_hist[i]);
    fit_next();
  }

  std::string kind() const override { return "osscp_horizon"; }
  const HorizonConfig& config() const { return cfg_; }
  const QuantilePair& pair() const { return *pair_; }

  PairPrediction predict(std::span<const double> x) const override { return predict_pair(*pair_, x); }
  const ScoreWindow& scores() const override { return scores_; }
  std::size_t fit_count() const override { return fits_; }

  void update(std::span<const double> x, double y) override {
    const auto q = predict_pair(*pair_, x);
    scores_.push(cqr_score(y, q.lo, q.hi));
    history_.push(x, y);
    fit_next();
  }

  nlohmann::json checkpoint() const override {
    return {{"kind", kind()},
            {"train_len", cfg_.train_len},
            {"cal_len", cfg_.cal_len},
            {"horizon", cfg_.horizon},
            {"fits", fits_},
            {"history", history_.to_json()},
            {"scores", detail::scores_to_json(scores_)},
            {"pair", detail::pair_to_json(*pair_)}};
  }

  static std::unique_ptr<HorizonEngine> from_checkpoint(const nlohmann::json& j, PairFitter fitter) {
    auto e = std::unique_ptr<HorizonEngine>(new HorizonEngine());
    e->cfg_ = {j.at("train_len").get<std::size_t>(), j.at("cal_len").get<std::size_t>(),
               j.at("horizon").get<std::size_t>()};
    e->fitter_ = std::move(fitter);
    e->fits_ = j.at("fits").get<std::size_t>();
    e->history_ = detail::History::from_json(j.at("history"));
    e->scores_ = detail::scores_from_json(j.at("scores"));
    e->pair_ = detail::pair_from_json(j.at("pair"));
    return e;
  }

 private:
  HorizonEngine() = default;

  // Pair for the next prediction, fitted on the oldest train_len - horizon + 1
  // of the last train_len observations.
  void fit_next() {
    auto [X, y] = history_.slice(0, cfg_.train_len - cfg_.horizon + 1);
    pair_ = fitter_(X, y, pair_ ? &*pair_ : nullptr);
    ++fits_;
  }

  HorizonConfig cfg_;
  PairFitter fitter_;
  std::size_t fits_ = 0;
  detail::History history_;
  ScoreWindow scores_;
  std::optional<QuantilePair> pair_;
};

// Quantile regression without calibration: the pair is refit on the last
// `window` observations after every reveal. Has no scores.
class RawQuantileEngine final : public ConformalEngine {
 public:
  RawQuantileEngine(std::size_t window, PairFitter fitter, const Matrix& X_hist,
                    std::span<const double> y_hist)
      : fitter_(std::move(fitter)) {
    if (window < 2) throw ConfigError("raw_qr: window must be >= 2");
    detail::check_history(X_hist, y_hist, window);
    history_.capacity = window;
    for (std::size_t i = X_hist.rows() - window; i < X_hist.rows(); ++i)
      history_.push(X_hist.row(i), y_hist[i]);
    refit();
  }

  std::string kind() const override { return "raw_qr"; }
  PairPrediction predict(std::span<const double> x) const override { return predict_pair(*pair_, x); }
  const ScoreWindow& scores() const override { return scores_; }
  std::size_t fit_count() const override { return fits_; }
  void update(std::span<const double> x, double y) override {
    history_.push(x, y);
    refit();
  }
  nlohmann::json checkpoint() const override {
    return {{"kind", kind()}, {"fits", fits_}, {"history", history_.to_json()},
            {"pair", detail::pair_to_json(*pair_)}};
  }

 private:
  void refit() {
    auto [X, y] = history_.slice(0, history_.size());
    pair_ = fitter_(X, y, pair_ ? &*pair_ : nullptr);
    ++fits_;
  }

  PairFitter fitter_;
  std::size_t fits_ = 0;
  detail::History history_;
  ScoreWindow scores_{1};
  std::optional<QuantilePair> pair_;
};

}  // namespace epf
