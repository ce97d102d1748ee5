#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "robreg/errors.hpp"
#include "robreg/objective.hpp"
#include "robreg/regularizers.hpp"

namespace robreg {

struct SolverOptions {
  /// Fixed step-size parameter eta (step 1/eta). Unset selects backtracking.
  std::optional<double> eta;
  /// Starting eta for backtracking; eta never decreases within a solve.
  double eta0 = 1.0;
  std::size_t max_iters = 50000;
  /// Stop when ||b_{t+1} - b_t||_2 / max(1, ||b_t||_2) <= tol.
  double tol = 1e-8;
  bool record_trace = true;
  /// If set, the trace records ||b_t - reference||_2 per iteration.
  std::optional<Eigen::VectorXd> reference;
};

enum class Termination { Converged, MaxIterations, Trivial };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Trivial: return "trivial";
  }
  return "?";
}

/// Per-iteration history. Entry t describes iterate b_{t+1}.
struct SolverTrace {
  std::vector<double> objective;
  std::vector<double> step_size;
  std::vector<double> dist_to_ref;
  double final_residual = 0.0;
  std::size_t iterations = 0;
  Termination reason = Termination::MaxIterations;
};

struct SolverResult {
  Eigen::VectorXd beta;
  SolverTrace trace;
};

inline void validate(const SolverOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidSpec("solver: tol must be positive");
  if (opts.max_iters < 1) throw InvalidSpec("solver: max_iters must be >= 1");
  if (opts.eta && !(*opts.eta > 0.0)) throw InvalidSpec("solver: eta must be positive");
  if (!(opts.eta0 > 0.0)) throw InvalidSpec("solver: eta0 must be positive");
}

namespace detail {

/// Value of the smooth part L_n - q_lambda and its gradient.
struct SmoothEval {
  double value;
  Eigen::VectorXd grad;
};

inline SmoothEval smooth_eval(const Problem& prob, const Eigen::VectorXd& beta) {
  LossAndGradient lg = loss_and_gradient(prob, beta);
  if (prob.reg().kind == PenaltyKind::L1) return {lg.value, std::move(lg.grad)};
  return {lg.value - eval_q(prob.reg(), beta), lg.grad - q_gradient(prob.reg(), beta)};
}

inline Eigen::VectorXd prox_step(const Problem& prob, const Eigen::VectorXd& beta, const Eigen::VectorXd& grad,
                                 double eta) {
  const Eigen::VectorXd z = beta - grad / eta;
  return prox_l1_constrained(z, prob.reg().lambda / eta, prob.R());
}

/// Quadratic upper model at beta evaluated at cand.
inline bool majorizes(const SmoothEval& at, const Eigen::VectorXd& beta, const SmoothEval& cand_eval,
                      const Eigen::VectorXd& cand, double eta) {
  const Eigen::VectorXd d = cand - beta;
  const double model = at.value + at.grad.dot(d) + 0.5 * eta * d.squaredNorm();
  return cand_eval.value <= model + 1e-13 * (1.0 + std::abs(at.value));
}

constexpr int kMaxDoublings = 60;

struct BacktrackOutcome {
  double eta;
  Eigen::VectorXd beta;
  SmoothEval eval;
};

inline BacktrackOutcome backtrack(const Problem& prob, const Eigen::VectorXd& beta, const SmoothEval& at, double eta0,
                                  std::size_t iteration) {
  double eta = eta0;
  for (int k = 0; k <= kMaxDoublings; ++k) {
    Eigen::VectorXd cand = prox_step(prob, beta, at.grad, eta);
    SmoothEval ce = smooth_eval(prob, cand);
    if (std::isfinite(ce.value) && majorizes(at, beta, ce, cand, eta)) return {eta, std::move(cand), std::move(ce)};
    eta *= 2.0;
  }
  throw SolverError("backtracking: curvature estimation failed after 60 doublings", iteration);
}

}  // namespace detail

/// Smallest eta0 * 2^k whose quadratic model majorizes L_n - q_lambda at the
/// resulting prox point (sufficient-decrease test).
inline double backtracking_step(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta, double eta0) {
  prob.require_dim(beta);
  if (!(eta0 > 0.0)) throw DomainError("backtracking_step: eta0 must be positive");
  const Eigen::VectorXd b = beta;
  return detail::backtrack(prob, b, detail::smooth_eval(prob, b), eta0, 0).eta;
}

/// Composite gradient descent on L_n - q_lambda + lambda ||.||_1 over the
/// l1 ball of radius R:
///   b_{t+1} = argmin_{||b||_1 <= R} 1/2 ||b - (b_t - grad/eta)||^2 + (lambda/eta) ||b||_1,
/// which is soft-thresholding at lambda/eta, with the threshold inflated when
/// the ball constraint binds.
inline SolverResult composite_gd(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& beta0,
                                 const SolverOptions& opts = {}) {
  validate(opts);
  prob.require_dim(beta0);
  if (prob.local_ball()) throw InvalidSpec("composite_gd: local-ball constraints are handled by solve_oracle");
  if (!prob.is_feasible(beta0)) throw DomainError("composite_gd: beta0 is infeasible (||beta0||_1 > R)");
  if (opts.reference && opts.reference->size() != prob.p()) throw DomainError("composite_gd: reference has wrong length");

  SolverResult out{beta0, {}};
  SolverTrace& trace = out.trace;
  if (prob.R() == 0.0) {
    out.beta.setZero();
    trace.reason = Termination::Trivial;
    return out;
  }

  const double lam = prob.reg().lambda;
  Eigen::VectorXd beta = beta0;
  detail::SmoothEval cur = detail::smooth_eval(prob, beta);
  double eta = opts.eta.value_or(opts.eta0);
  trace.reason = Termination::MaxIterations;

  for (std::size_t t = 0; t < opts.max_iters; ++t) {
    if (!cur.grad.allFinite() || !std::isfinite(cur.value)) throw SolverError("composite_gd: non-finite gradient", t);

    Eigen::VectorXd next;
    detail::SmoothEval next_eval;
    if (opts.eta) {
      next = detail::prox_step(prob, beta, cur.grad, eta);
      next_eval = detail::smooth_eval(prob, next);
    } else {
      auto bt = detail::backtrack(prob, beta, cur, eta, t);
      eta = bt.eta;
      next = std::move(bt.beta);
      next_eval = std::move(bt.eval);
    }

    const double change = (next - beta).norm() / std::max(1.0, beta.norm());
    beta = std::move(next);
    cur = std::move(next_eval);
    ++trace.iterations;

    if (opts.record_trace) {
      trace.objective.push_back(cur.value + lam * beta.lpNorm<1>());
      trace.step_size.push_back(eta);
      if (opts.reference) trace.dist_to_ref.push_back((beta - *opts.reference).norm());
    }
    if (change <= opts.tol) {
      trace.reason = Termination::Converged;
      break;
    }
  }
  if (!cur.grad.allFinite()) throw SolverError("composite_gd: non-finite gradient", trace.iterations);

  out.beta = beta;
  trace.final_residual = stationarity_residual(prob, beta);
  return out;
}

struct TwoStepResult {
  Eigen::VectorXd beta;
  SolverResult step1;
  SolverResult step2;
};

/// Convex initialization followed by the target fit: composite_gd on
/// prob_convex from 0, then on prob_target from the step-1 output.
inline TwoStepResult two_step(const Problem& prob_convex, const Problem& prob_target, const SolverOptions& opts1 = {},
                              const SolverOptions& opts2 = {}) {
  const LossKind k1 = prob_convex.loss().kind;
  if (!(k1 == LossKind::Huber || k1 == LossKind::Absolute))
    throw InvalidSpec("two_step: step 1 needs a convex loss with bounded derivative (huber or absolute)");
  if (prob_convex.reg().kind != PenaltyKind::L1) throw InvalidSpec("two_step: step 1 must use the l1 penalty");
  const bool same_shape = prob_convex.n() == prob_target.n() && prob_convex.p() == prob_target.p();
  const bool same_data =
      same_shape && (prob_convex.X_ptr() == prob_target.X_ptr() || prob_convex.X() == prob_target.X()) &&
      (prob_convex.y_ptr() == prob_target.y_ptr() || prob_convex.y() == prob_target.y());
  if (!same_data || prob_convex.R() != prob_target.R())
    throw InvalidSpec("two_step: both problems must share X, y and R");

  TwoStepResult out;
  out.step1 = composite_gd(prob_convex, Eigen::VectorXd::Zero(prob_convex.p()), opts1);
  out.step2 = composite_gd(prob_target, out.step1.beta, opts2);
  out.beta = out.step2.beta;
  return out;
}

}  // namespace robreg
