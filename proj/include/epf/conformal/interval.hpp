#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "epf/errors.hpp"

namespace epf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct PredictionInterval {
  double lower = -kInf;
  double upper = kInf;
  double level = 0.9;  // target coverage 1 - alpha

  bool contains(double y) const noexcept { return lower <= y && y <= upper; }
  bool is_finite() const noexcept { return std::isfinite(lower) && std::isfinite(upper); }
  double width() const noexcept { return upper - lower; }
  friend bool operator==(const PredictionInterval&, const PredictionInterval&) = default;
};

// Signed excess of y beyond the fitted pair: negative strictly inside,
// zero on a bound.
inline double cqr_score(double y, double q_lo, double q_hi) {
  if (q_lo > q_hi) throw Error("cqr_score: crossed quantile pair (reorder first)");
  return std::max(q_lo - y, y - q_hi);
}

// Calibration scores in arrival order plus a sorted view. When full, the
// oldest score is evicted on insertion.
class ScoreWindow {
 public:
  explicit ScoreWindow(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return in_order_.size(); }
  bool empty() const noexcept { return in_order_.empty(); }
  const std::deque<double>& scores() const noexcept { return in_order_; }
  const std::vector<double>& sorted() const noexcept { return sorted_; }

  void push(double s) {
    if (std::isnan(s)) throw NumericError("ScoreWindow: NaN score");
    if (capacity_ == 0) throw ConfigError("ScoreWindow: zero capacity");
    if (in_order_.size() == capacity_) {
      const double old = in_order_.front();
      in_order_.pop_front();
      sorted_.erase(std::lower_bound(sorted_.begin(), sorted_.end(), old));
    }
    in_order_.push_back(s);
    sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), s), s);
  }

  void clear() {
    in_order_.clear();
    sorted_.clear();
  }

  // Replaces the content with `scores` (oldest first).
  void assign(std::span<const double> scores) {
    clear();
    for (double s : scores) push(s);
  }

 private:
  std::size_t capacity_;
  std::deque<double> in_order_;
  std::vector<double> sorted_;
};

// Rank used by the finite-sample correction: ceil((1 - alpha)(n + 1)). A
// relative slack absorbs rounding when the product is an exact integer.
inline std::size_t corrected_rank(std::size_t n, double alpha) {
  const double np1 = static_cast<double>(n + 1);
  const double x = (1.0 - alpha) * np1;
  return static_cast<std::size_t>(std::max(0.0, std::ceil(x - 1e-9 * np1)));
}

inline double corrected_quantile_sorted(std::span<const double> sorted, double alpha) {
  if (sorted.empty()) throw Error("corrected_quantile: empty score set");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("corrected_quantile: alpha must lie in (0, 1)");
  const std::size_t k = std::max<std::size_t>(1, corrected_rank(sorted.size(), alpha));
  if (k > sorted.size()) return kInf;
  return sorted[k - 1];
}

inline double corrected_quantile(const ScoreWindow& scores, double alpha) {
  return corrected_quantile_sorted(scores.sorted(), alpha);
}

inline double corrected_quantile(std::span<const double> scores, double alpha) {
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  return corrected_quantile_sorted(s, alpha);
}

// [q_lo - Q, q_hi + Q]; Q = +inf gives the whole line, and a negative Q that
// inverts the bounds collapses to the midpoint.
inline PredictionInterval conformal_interval(double q_lo, double q_hi, double Q, double level) {
  if (q_lo > q_hi) throw Error("conformal_interval: crossed quantile pair");
  if (std::isnan(Q)) throw NumericError("conformal_interval: NaN correction");
  if (Q == kInf) return {-kInf, kInf, level};
  double lo = q_lo - Q, hi = q_hi + Q;
  if (lo > hi) lo = hi = 0.5 * (q_lo + q_hi);
  return {lo, hi, level};
}

}  // namespace epf
