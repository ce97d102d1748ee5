#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "robreg/errors.hpp"
#include "robreg/losses.hpp"
#include "robreg/regularizers.hpp"
#include "robreg/weights.hpp"

namespace robreg {

/// Optional l2 ball {beta : ||beta - center||_2 <= radius}.
struct LocalBall {
  Eigen::VectorXd center;
  double radius = 0.0;
};

/// Penalized (generalized) M-estimation problem
///   min_{||beta||_1 <= R [, ||beta - c||_2 <= r]}  L_n(beta) + rho_lambda(beta).
///
/// Immutable after construction. The design matrix is shared between copies,
/// and per-row weights w(x_i), v(x_i) are evaluated once here.
class Problem {
 public:
  Problem(Eigen::MatrixXd X, Eigen::VectorXd y, LossSpec loss, WeightScheme weights, RegularizerSpec reg, double R,
          std::optional<LocalBall> ball = std::nullopt)
      : Problem(std::make_shared<const Eigen::MatrixXd>(std::move(X)),
                std::make_shared<const Eigen::VectorXd>(std::move(y)), loss, std::move(weights), reg, R,
                std::move(ball)) {}

  Problem(std::shared_ptr<const Eigen::MatrixXd> X, std::shared_ptr<const Eigen::VectorXd> y, LossSpec loss,
          WeightScheme weights, RegularizerSpec reg, double R, std::optional<LocalBall> ball = std::nullopt)
      : X_(std::move(X)), y_(std::move(y)), loss_(loss), weights_(std::move(weights)), reg_(reg), R_(R),
        ball_(std::move(ball)) {
    validate_inputs();
    const Eigen::Index n = X_->rows();
    row_w_.resize(n);
    row_v_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd xi = X_->row(i).transpose();
      row_w_[i] = weight_w(weights_, xi);
      row_v_[i] = weight_v(weights_, xi);
    }
  }

  Eigen::Index n() const { return X_->rows(); }
  Eigen::Index p() const { return X_->cols(); }
  const Eigen::MatrixXd& X() const { return *X_; }
  const Eigen::VectorXd& y() const { return *y_; }
  const std::shared_ptr<const Eigen::MatrixXd>& X_ptr() const { return X_; }
  const std::shared_ptr<const Eigen::VectorXd>& y_ptr() const { return y_; }
  const LossSpec& loss() const { return loss_; }
  const WeightScheme& weights() const { return weights_; }
  const RegularizerSpec& reg() const { return reg_; }
  double R() const { return R_; }
  const std::optional<LocalBall>& local_ball() const { return ball_; }
  const Eigen::VectorXd& row_w() const { return row_w_; }
  const Eigen::VectorXd& row_v() const { return row_v_; }

  /// Same data and weights with a different loss / penalty / radius.
  Problem with(LossSpec loss, RegularizerSpec reg) const {
    Problem out = *this;
    out.loss_ = loss;
    out.reg_ = reg;
    validate(out.loss_);
    validate(out.reg_);
    return out;
  }

  Problem with_ball(std::optional<LocalBall> ball) const {
    Problem out = *this;
    out.ball_ = std::move(ball);
    out.validate_inputs();
    return out;
  }

  /// Columns restricted to `support`; row weights keep their full-x values so
  /// the restricted loss equals L_n on vectors supported on `support`.
  Problem restricted(std::span<const Eigen::Index> support) const {
    Eigen::MatrixXd Xs(n(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) {
      if (support[c] < 0 || support[c] >= p()) throw DomainError("restricted: support index out of range");
      Xs.col(static_cast<Eigen::Index>(c)) = X_->col(support[c]);
    }
    Problem out = *this;
    out.X_ = std::make_shared<const Eigen::MatrixXd>(std::move(Xs));
    out.ball_.reset();
    return out;
  }

  void require_dim(const Eigen::Ref<const Eigen::VectorXd>& beta) const {
    if (beta.size() != p()) throw DomainError("dimension mismatch: beta has wrong length");
  }

  bool is_feasible(const Eigen::Ref<const Eigen::VectorXd>& beta, double tol = 1e-9) const {
    if (beta.lpNorm<1>() > R_ + tol * std::max(1.0, R_)) return false;
    if (ball_ && (beta - ball_->center).norm() > ball_->radius + tol * std::max(1.0, ball_->radius)) return false;
    return true;
  }

 private:
  void validate_inputs() const {
    if (X_->rows() < 1 || X_->cols() < 1) throw InvalidSpec("problem: need n >= 1 and p >= 1");
    if (y_->size() != X_->rows()) throw DomainError("problem: y length must equal rows of X");
    if (!X_->allFinite() || !y_->allFinite()) throw DomainError("problem: X and y must be finite");
    validate(loss_);
    validate(reg_);
    if (!(R_ >= 0.0) || !std::isfinite(R_)) throw InvalidSpec("problem: R must be finite and nonnegative");
    if (ball_) {
      if (ball_->center.size() != X_->cols()) throw DomainError("problem: ball center has wrong length");
      if (!(ball_->radius > 0.0)) throw InvalidSpec("problem: ball radius must be positive");
      // Feasible set is nonempty iff the l1-ball projection of the center lies in the l2 ball.
      const Eigen::VectorXd proj =
          R_ > 0.0 ? prox_l1_constrained(ball_->center, 0.0, R_) : Eigen::VectorXd::Zero(X_->cols());
      if ((proj - ball_->center).norm() > ball_->radius) throw InvalidSpec("problem: feasible set is empty");
    }
  }

  std::shared_ptr<const Eigen::MatrixXd> X_;
  std::shared_ptr<const Eigen::VectorXd> y_;
  LossSpec loss_;
  WeightScheme weights_;
  RegularizerSpec reg_;
  double R_;
  std::optional<LocalBall> ball_;
  Eigen::VectorXd row_w_;
  Eigen::VectorXd row_v_;
};

namespace detail {

/// Weighted loss from precomputed residuals r = X beta - y.
template <RobustLoss L>
double weighted_loss(const L& l, const Eigen::VectorXd& r, const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += (w[i] / v[i]) * l.value(r[i] * v[i]);
  return total / static_cast<double>(r.size());
}

/// Per-row gradient coefficients w_i l'(r_i v_i) / n.
template <RobustLoss L>
Eigen::VectorXd score_coefficients(const L& l, const Eigen::VectorXd& r, const Eigen::VectorXd& w,
                                   const Eigen::VectorXd& v) {
  Eigen::VectorXd c(r.size());
  const double inv_n = 1.0 / static_cast<double>(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) c[i] = w[i] * l.psi(r[i] * v[i]) * inv_n;
  return c;
}

}  // namespace detail

inline Eigen::VectorXd residuals(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  prob.require_dim(beta);
  return prob.X() * beta - prob.y();
}

/// L_n(beta) = (1/n) sum_i w_i/v_i * l((x_i^T beta - y_i) v_i).
inline double loss_value(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  const Eigen::VectorXd r = residuals(prob, beta);
  return visit_loss(prob.loss(),
                    [&](const auto& l) { return detail::weighted_loss(l, r, prob.row_w(), prob.row_v()); });
}

/// grad L_n(beta) = (1/n) sum_i w_i l'((x_i^T beta - y_i) v_i) x_i.
inline Eigen::VectorXd gradient(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  const Eigen::VectorXd r = residuals(prob, beta);
  const Eigen::VectorXd c = visit_loss(
      prob.loss(), [&](const auto& l) { return detail::score_coefficients(l, r, prob.row_w(), prob.row_v()); });
  return prob.X().transpose() * c;
}

struct LossAndGradient {
  double value;
  Eigen::VectorXd grad;
};

/// One pass over the residuals for both the value and the gradient.
inline LossAndGradient loss_and_gradient(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  const Eigen::VectorXd r = residuals(prob, beta);
  return visit_loss(prob.loss(), [&](const auto& l) {
    const double value = detail::weighted_loss(l, r, prob.row_w(), prob.row_v());
    const Eigen::VectorXd c = detail::score_coefficients(l, r, prob.row_w(), prob.row_v());
    return LossAndGradient{value, prob.X().transpose() * c};
  });
}

inline double objective_value(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return loss_value(prob, beta) + eval_penalty(prob.reg(), beta);
}

/// Gradient of the smooth part L_n - q_lambda driven by the composite solver.
inline Eigen::VectorXd smooth_gradient(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return gradient(prob, beta) - q_gradient(prob.reg(), beta);
}

inline double grad_supnorm_at_truth(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta_star) {
  return gradient(prob, beta_star).lpNorm<Eigen::Infinity>();
}

namespace detail {

/// Golden-section minimization of a convex function on [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi, int iters = 120) {
  constexpr double g = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iters && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return std::min({f(lo), fc, fd});
}

/// Minimum over nu >= 0 of a convex function, bracketing the minimizer first.
template <class F>
double min_over_nonneg(F&& f, double initial_hi) {
  double hi = std::max(initial_hi, 1e-12);
  for (int k = 0; k < 200 && f(2.0 * hi) < f(hi); ++k) hi *= 2.0;
  return golden_min(f, 0.0, 2.0 * hi);
}

}  // namespace detail

/// Norm of the minimal-norm element of
///   grad L_n(beta) - grad q(beta) + lambda d||beta||_1 + N_C(beta),
/// where N_C is the normal cone of the feasible set (l1 ball, and the local
/// ball if present). Zero exactly at first-order stationary points.
inline double stationarity_residual(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  prob.require_dim(beta);
  if (!prob.is_feasible(beta)) throw DomainError("stationarity_residual: beta is infeasible");
  const Eigen::VectorXd g = smooth_gradient(prob, beta);
  const double lam = prob.reg().lambda;
  const double R = prob.R();
  const bool l1_active = beta.lpNorm<1>() >= R - 1e-9 * std::max(1.0, R);
  const auto& ball = prob.local_ball();
  const bool ball_active = ball && (beta - ball->center).norm() >= ball->radius * (1.0 - 1e-9);
  const Eigen::VectorXd offset = ball ? Eigen::VectorXd(beta - ball->center) : Eigen::VectorXd::Zero(beta.size());

  auto sq_norm = [&](double nu, double zeta) {
    double s = 0.0;
    const double t = lam + nu;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      const double d = g[j] + zeta * offset[j];
      double e;
      if (beta[j] != 0.0) e = d + (beta[j] > 0.0 ? t : -t);
      else e = std::max(0.0, std::abs(d) - t);
      s += e * e;
    }
    return s;
  };
  auto best_over_nu = [&](double zeta) {
    if (!l1_active) return sq_norm(0.0, zeta);
    const double hi = (g + zeta * offset).lpNorm<Eigen::Infinity>() + 1.0;
    return detail::min_over_nonneg([&](double nu) { return sq_norm(nu, zeta); }, hi);
  };
  const double best = ball_active ? detail::min_over_nonneg(best_over_nu, 1.0) : best_over_nu(0.0);
  return std::sqrt(std::max(0.0, best));
}

/// Stationarity tolerance 1e-6 * (1 + ||grad L_n(beta)||_inf).
inline double stationarity_tolerance(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return 1e-6 * (1.0 + gradient(prob, beta).lpNorm<Eigen::Infinity>());
}

inline bool is_stationary(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return stationarity_residual(prob, beta) <= stationarity_tolerance(prob, beta);
}

}  // namespace robreg
