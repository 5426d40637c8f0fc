#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "epf/errors.hpp"
#include "epf/matrix.hpp"
#include "epf/models/pinball.hpp"

namespace epf {

struct LinearQrOptions {
  double tolerance = 1e-6;       // relative objective change that ends a smoothing stage
  std::size_t max_iter = 10000;  // over all stages
  std::uint64_t seed = 0;        // accepted for interface symmetry; the solver is deterministic
  double initial_smoothing = 0.5;  // Huber width in units of the target scale
  double final_smoothing = 1e-4;
  double smoothing_decay = 0.1;
};

struct FitDiagnostics {
  std::size_t iterations = 0;
  double objective = 0.0;  // penalized mean pinball loss, original units
  bool converged = false;
};

// Linear quantile regression, optionally L1-penalized. Coefficients are
// expressed on the original feature scale; the penalty acts on the
// standardized ones.
struct LinearQuantileModel {
  QuantileLevel level{0.5};
  std::vector<double> coefficients;
  double intercept = 0.0;
  double l1_penalty = 0.0;
  FitDiagnostics diagnostics;

  std::size_t n_features() const noexcept { return coefficients.size(); }

  double predict(std::span<const double> x) const {
    if (x.size() != coefficients.size())
      throw DimensionError("linear model expects " + std::to_string(coefficients.size()) +
                           " features, got " + std::to_string(x.size()));
    double s = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) s += coefficients[j] * x[j];
    return s;
  }
};

namespace detail {

// Largest eigenvalue of a small symmetric PSD matrix by power iteration.
inline double largest_eigenvalue(const std::vector<double>& gram, std::size_t dim) {
  std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim))), w(dim);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    for (std::size_t i = 0; i < dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += gram[i * dim + j] * v[j];
      w[i] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    const double prev = lambda;
    lambda = norm;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / norm;
    if (std::abs(lambda - prev) <= 1e-10 * lambda) break;
  }
  return lambda;
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Frisch-Newton primal-dual interior point for the unpenalized problem
// min sum_i rho_beta(y_i - b - z_i'w), written as the bounded LP
//   min -y'a  s.t.  A a = (1 - beta) A 1,  0 <= a <= 1,  A = [1 Z]'
// whose dual variables are -(b, w). Columns with active[j] == false are left
// out. Returns false when the normal equations become singular or the
// iteration cap is hit.
inline bool rq_interior_point(const Matrix& Z, const std::vector<double>& y, double beta,
                              const std::vector<bool>& active, std::vector<double>& theta,
                              std::size_t max_iter, std::size_t& iterations) {
  using Eigen::ArrayXd;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto n = static_cast<Eigen::Index>(Z.rows());
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < active.size(); ++j)
    if (active[j]) cols.push_back(j);
  const auto p = static_cast<Eigen::Index>(cols.size() + 1);
  MatrixXd A(p, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(0, i) = 1.0;
    for (std::size_t k = 0; k < cols.size(); ++k) A(static_cast<Eigen::Index>(k) + 1, i) = Z(i, cols[k]);
  }
  const VectorXd c = -Eigen::Map<const VectorXd>(y.data(), n);
  ArrayXd x = ArrayXd::Constant(n, 1.0 - beta);
  const VectorXd b = A * x.matrix();

  Eigen::LLT<MatrixXd> llt(A * A.transpose());
  if (llt.info() != Eigen::Success) return false;
  VectorXd dual = llt.solve(A * c);
  const ArrayXd r0 = (c - A.transpose() * dual).array();
  constexpr double kEps = 1e-8;
  ArrayXd z = r0.max(0.0), w = (-r0).max(0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(r0[i]) < kEps) {
      z[i] += kEps;
      w[i] += kEps;
    }
  }
  ArrayXd s = 1.0 - x;
  auto gap_of = [&] { return c.dot(x.matrix()) - dual.dot(b) + w.sum(); };
  auto step_bound = [](const ArrayXd& v, const ArrayXd& dv) {
    double m = 1e300;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) m = std::min(m, -v[i] / dv[i]);
    return m;
  };
  constexpr double kDamp = 0.99995;
  const double tol = 1e-10 * static_cast<double>(n);
  double gap = gap_of();
  iterations = 0;
  while (gap > tol) {
    if (iterations >= max_iter) return false;
    ++iterations;
    const ArrayXd q = 1.0 / (z / x + w / s);
    const ArrayXd r = z - w;
    const MatrixXd AQ = A * q.matrix().asDiagonal();
    llt.compute(AQ * A.transpose());
    if (llt.info() != Eigen::Success) return false;
    VectorXd rhs = AQ * r.matrix();
    VectorXd dy = llt.solve(rhs);
    ArrayXd dx = q * ((A.transpose() * dy).array() - r);
    ArrayXd ds = -dx;
    ArrayXd dz = -z * (dx / x + 1.0);
    ArrayXd dw = -w * (ds / s + 1.0);
    double fp = std::min(kDamp * std::min(step_bound(x, dx), step_bound(s, ds)), 1.0);
    double fd = std::min(kDamp * std::min(step_bound(w, dw), step_bound(z, dz)), 1.0);
    if (std::min(fp, fd) < 1.0) {
      // Mehrotra corrector.
      double mu = (z * x).sum() + (w * s).sum();
      const double g = ((z + fd * dz) * (x + fp * dx)).sum() + ((w + fd * dw) * (s + fp * ds)).sum();
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      const ArrayXd dxdz = dx * dz, dsdw = ds * dw;
      const ArrayXd xinv = 1.0 / x, sinv = 1.0 / s;
      const ArrayXd xi = mu * (xinv - sinv);
      rhs += A * (q * (dxdz - dsdw - xi)).matrix();
      dy = llt.solve(rhs);
      dx = q * ((A.transpose() * dy).array() + xi - r - dxdz + dsdw);
      ds = -dx;
      dz = mu * xinv - z - xinv * z * dx - dxdz;
      dw = mu * sinv - w - sinv * w * ds - dsdw;
      fp = std::min(kDamp * std::min(step_bound(x, dx), step_bound(s, ds)), 1.0);
      fd = std::min(kDamp * std::min(step_bound(w, dw), step_bound(z, dz)), 1.0);
    }
    x += fp * dx;
    s += fp * ds;
    dual += fd * dy;
    w += fd * dw;
    z += fd * dz;
    gap = gap_of();
    if (!std::isfinite(gap)) return false;
  }
  std::fill(theta.begin(), theta.end(), 0.0);
  theta[0] = -dual[0];
  for (std::size_t k = 0; k < cols.size(); ++k) theta[cols[k] + 1] = -dual[static_cast<Eigen::Index>(k) + 1];
  return true;
}

}  // namespace detail

// Minimizes mean_i rho_beta(y_i - b - x_i'w) + lambda * sum_j |w_j s_j|,
// where s_j is the sample standard deviation of feature j. With lambda = 0
// the LP is solved by the interior-point routine above. Otherwise the pinball kink
// is replaced by a Huber corner of width delta, and delta shrinks geometrically
// across stages; each stage runs accelerated proximal gradient (soft
// thresholding on w) with restart until the relative change of the smoothed
// objective drops below `tolerance`.
inline LinearQuantileModel fit_linear_qr(const Matrix& X, std::span<const double> y,
                                         QuantileLevel beta, double lambda,
                                         const LinearQrOptions& opts = {},
                                         const LinearQuantileModel* warm_start = nullptr) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (n == 0) throw NumericError("fit_linear_qr: empty design");
  if (y.size() != n) throw DimensionError("fit_linear_qr: X and y lengths differ");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("fit_linear_qr: lambda must be a finite value >= 0");
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericError("fit_linear_qr: non-finite target");
  }
  if (n < 2) throw NumericError("fit_linear_qr: need at least 2 rows");
  if (warm_start && warm_start->coefficients.size() != p)
    throw DimensionError("fit_linear_qr: warm start has the wrong dimension");

  const double nd = static_cast<double>(n);
  const double b = beta.value();

  // Standardize features and target.
  std::vector<double> mean(p, 0.0), scale(p, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = X.row(i);
    for (std::size_t j = 0; j < p; ++j) mean[j] += r[j];
  }
  for (auto& m : mean) m /= nd;
  for (std::size_t j = 0; j < p; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = X(i, j) - mean[j];
      ss += d * d;
    }
    const double sd = std::sqrt(ss / nd);
    scale[j] = sd > 1e-12 * (1.0 + std::abs(mean[j])) ? sd : 0.0;  // 0 marks a constant column
  }
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= nd;
  double y_ss = 0.0;
  for (double v : y) y_ss += (v - y_mean) * (v - y_mean);
  double y_scale = std::sqrt(y_ss / nd);
  if (!(y_scale > 1e-12 * (1.0 + std::abs(y_mean)))) y_scale = 1.0;

  Matrix Z(n, p);
  std::vector<double> yt(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) Z(i, j) = scale[j] > 0.0 ? (X(i, j) - mean[j]) / scale[j] : 0.0;
    yt[i] = (y[i] - y_mean) / y_scale;
  }
  const double pen = lambda / y_scale;

  // Gram matrix of [1, Z] / n for the step size.
  const std::size_t dim = p + 1;
  std::vector<double> gram(dim * dim, 0.0);
  gram[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto zr = Z.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      gram[(j + 1) * dim] += zr[j] / nd;
      for (std::size_t k = j; k < p; ++k) gram[(j + 1) * dim + k + 1] += zr[j] * zr[k] / nd;
    }
  }
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t k = 0; k < j; ++k) gram[j * dim + k] = gram[k * dim + j];
  const double gram_norm = std::max(detail::largest_eigenvalue(gram, dim), 1e-12);

  // theta = (intercept, w) in standardized units.
  std::vector<double> theta(dim, 0.0);
  double delta = opts.initial_smoothing;
  if (warm_start) {
    double icpt = warm_start->intercept;
    for (std::size_t j = 0; j < p; ++j) {
      icpt += warm_start->coefficients[j] * mean[j];
      theta[j + 1] = warm_start->coefficients[j] * scale[j] / y_scale;
    }
    theta[0] = (icpt - y_mean) / y_scale;
    delta = std::max(opts.final_smoothing, opts.initial_smoothing * opts.smoothing_decay *
                                               opts.smoothing_decay);
  } else {
    theta[0] = empirical_quantile(std::vector<double>(yt.begin(), yt.end()), b);
  }

  std::vector<double> resid(n), grad(dim), prev_theta(dim);
  auto residuals = [&](const std::vector<double>& t) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto zr = Z.row(i);
      double s = t[0];
      for (std::size_t j = 0; j < p; ++j) s += zr[j] * t[j + 1];
      resid[i] = yt[i] - s;
    }
  };
  auto smoothed_objective = [&](const std::vector<double>& t, double dlt) {
    residuals(t);
    double s = 0.0;
    for (double r : resid) {
      const double a = std::abs(r);
      const double h = a <= dlt ? r * r / (2.0 * dlt) : a - 0.5 * dlt;
      s += (b - 0.5) * r + 0.5 * h;
    }
    double l1 = 0.0;
    for (std::size_t j = 1; j < dim; ++j) l1 += std::abs(t[j]);
    return s / nd + pen * l1;
  };
  auto gradient_at = [&](const std::vector<double>& t, double dlt) {
    residuals(t);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resid[i];
      const double psi = (b - 0.5) + 0.5 * std::clamp(r / dlt, -1.0, 1.0);
      grad[0] -= psi;
      const auto zr = Z.row(i);
      for (std::size_t j = 0; j < p; ++j) grad[j + 1] -= psi * zr[j];
    }
    for (auto& g : grad) g /= nd;
  };

  std::size_t iters = 0;
  bool converged = false;
  if (pen == 0.0) {
    std::vector<bool> active(p);
    for (std::size_t j = 0; j < p; ++j) active[j] = scale[j] > 0.0;
    std::vector<double> exact(dim, 0.0);
    if (detail::rq_interior_point(Z, yt, b, active, exact, std::min<std::size_t>(100, opts.max_iter), iters)) {
      theta = exact;
      converged = true;
    }
  }
  constexpr std::size_t kCheckEvery = 10;
  while (!converged) {
    const double step = 2.0 * delta / gram_norm;
    double f_check = smoothed_objective(theta, delta);
    std::vector<double> y_pt = theta;
    double momentum = 1.0;
    bool stage_done = false;
    std::size_t stage_iter = 0;
    while (iters < opts.max_iter) {
      ++iters;
      gradient_at(y_pt, delta);
      prev_theta = theta;
      theta[0] = y_pt[0] - step * grad[0];
      for (std::size_t j = 1; j < dim; ++j) {
        const double v = y_pt[j] - step * grad[j];
        theta[j] = scale[j - 1] > 0.0 ? detail::soft_threshold(v, step * pen) : 0.0;
      }
      // Gradient-based restart: drop momentum when the step points uphill.
      double uphill = 0.0;
      for (std::size_t j = 0; j < dim; ++j) uphill += (y_pt[j] - theta[j]) * (theta[j] - prev_theta[j]);
      if (uphill > 0.0) {
        momentum = 1.0;
        y_pt = theta;
      } else {
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        const double w = (momentum - 1.0) / next;
        for (std::size_t j = 0; j < dim; ++j) y_pt[j] = theta[j] + w * (theta[j] - prev_theta[j]);
        momentum = next;
      }
      if (++stage_iter % kCheckEvery == 0) {
        const double f = smoothed_objective(theta, delta);
        const double change = std::abs(f_check - f);
        f_check = f;
        if (change <= opts.tolerance * std::max(1e-3, std::abs(f))) {
          stage_done = true;
          break;
        }
      }
    }
    if (!stage_done) break;
    if (delta <= opts.final_smoothing * (1.0 + 1e-12)) {
      converged = true;
      break;
    }
    delta = std::max(opts.final_smoothing, delta * opts.smoothing_decay);
  }

  LinearQuantileModel model;
  model.level = beta;
  model.l1_penalty = lambda;
  model.coefficients.assign(p, 0.0);
  double icpt = y_mean + y_scale * theta[0];
  for (std::size_t j = 0; j < p; ++j) {
    if (scale[j] > 0.0) {
      model.coefficients[j] = y_scale * theta[j + 1] / scale[j];
      icpt -= model.coefficients[j] * mean[j];
    }
  }
  // Given the slopes, the exact intercept minimizer is a beta-quantile of the
  // partial residuals; keep it only if it lowers the unsmoothed objective.
  std::vector<double> partial(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += model.coefficients[j] * X(i, j);
    partial[i] = y[i] - s;
  }
  const double exact = empirical_quantile(partial, b);
  double f_smooth = 0.0, f_exact = 0.0;
  for (double r : partial) {
    f_smooth += pinball_loss(r, icpt, beta);
    f_exact += pinball_loss(r, exact, beta);
  }
  model.intercept = f_exact <= f_smooth ? exact : icpt;

  // Unsmoothed objective in original units.
  double obj = 0.0;
  for (std::size_t i = 0; i < n; ++i) obj += pinball_loss(y[i], model.predict(X.row(i)), beta);
  obj /= nd;
  double l1 = 0.0;
  for (std::size_t j = 0; j < p; ++j) l1 += std::abs(model.coefficients[j]) * scale[j];
  model.diagnostics = {iters, obj + lambda * l1, converged};
  return model;
}

}  // namespace epf
