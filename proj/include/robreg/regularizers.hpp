#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "robreg/errors.hpp"

namespace robreg {

enum class PenaltyKind { L1, SCAD, MCP };

/// Coordinate-separable amenable penalty rho_lambda. `shape` is SCAD's a or
/// MCP's b and is ignored for L1.
struct RegularizerSpec {
  PenaltyKind kind = PenaltyKind::L1;
  double lambda = 0.0;
  double shape = 0.0;
};

inline std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::L1: return "l1";
    case PenaltyKind::SCAD: return "scad";
    case PenaltyKind::MCP: return "mcp";
  }
  return "?";
}

inline PenaltyKind parse_penalty_kind(std::string_view name) {
  if (name == "l1" || name == "lasso") return PenaltyKind::L1;
  if (name == "scad") return PenaltyKind::SCAD;
  if (name == "mcp") return PenaltyKind::MCP;
  throw InvalidSpec("unknown penalty kind '" + std::string(name) + "'");
}

inline void validate(const RegularizerSpec& reg) {
  if (!(reg.lambda > 0.0) || !std::isfinite(reg.lambda)) throw InvalidSpec("penalty lambda must be positive");
  if (reg.kind == PenaltyKind::SCAD && !(reg.shape > 2.0)) throw InvalidSpec("SCAD requires a > 2");
  if (reg.kind == PenaltyKind::MCP && !(reg.shape > 0.0)) throw InvalidSpec("MCP requires b > 0");
}

/// Scalar penalty rho_lambda(t).
inline double penalty_scalar(const RegularizerSpec& reg, double t) {
  const double a = std::abs(t);
  const double lam = reg.lambda;
  switch (reg.kind) {
    case PenaltyKind::L1:
      return lam * a;
    case PenaltyKind::SCAD: {
      const double s = reg.shape;
      if (a <= lam) return lam * a;
      if (a <= s * lam) return -(a * a - 2.0 * s * lam * a + lam * lam) / (2.0 * (s - 1.0));
      return (s + 1.0) * lam * lam / 2.0;
    }
    case PenaltyKind::MCP: {
      const double b = reg.shape;
      if (a <= b * lam) return lam * a - a * a / (2.0 * b);
      return b * lam * lam / 2.0;
    }
  }
  return 0.0;
}

/// rho'_lambda(t) for t != 0 (sign included). At the SCAD/MCP breakpoints
/// the left branch is used; both branches agree there.
inline double penalty_derivative(const RegularizerSpec& reg, double t) {
  if (t == 0.0) return 0.0;
  const double a = std::abs(t);
  const double sgn = t > 0.0 ? 1.0 : -1.0;
  const double lam = reg.lambda;
  switch (reg.kind) {
    case PenaltyKind::L1:
      return sgn * lam;
    case PenaltyKind::SCAD: {
      const double s = reg.shape;
      if (a <= lam) return sgn * lam;
      if (a <= s * lam) return sgn * (s * lam - a) / (s - 1.0);
      return 0.0;
    }
    case PenaltyKind::MCP:
      return sgn * std::max(0.0, lam - a / reg.shape);
  }
  return 0.0;
}

/// q_lambda(t) = lambda |t| - rho_lambda(t).
inline double q_scalar(const RegularizerSpec& reg, double t) {
  if (reg.kind == PenaltyKind::L1) return 0.0;
  return reg.lambda * std::abs(t) - penalty_scalar(reg, t);
}

/// q'_lambda(t); defined as 0 at t = 0, the common one-sided limit.
inline double eval_q_grad(const RegularizerSpec& reg, double t) {
  detail::require_finite(t, "eval_q_grad");
  if (reg.kind == PenaltyKind::L1 || t == 0.0) return 0.0;
  return (t > 0.0 ? reg.lambda : -reg.lambda) - penalty_derivative(reg, t);
}

inline double eval_penalty(const RegularizerSpec& reg, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    detail::require_finite(beta[j], "eval_penalty");
    total += penalty_scalar(reg, beta[j]);
  }
  return total;
}

inline double eval_q(const RegularizerSpec& reg, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  if (reg.kind == PenaltyKind::L1) return 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) total += q_scalar(reg, beta[j]);
  return total;
}

inline Eigen::VectorXd q_gradient(const RegularizerSpec& reg, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  Eigen::VectorXd g(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) g[j] = eval_q_grad(reg, beta[j]);
  return g;
}

/// Weak-convexity constant mu and flat-region multiplier gamma.
struct Amenability {
  double mu;
  double gamma;
};

inline Amenability amenability_params(const RegularizerSpec& reg) {
  switch (reg.kind) {
    case PenaltyKind::L1: return {0.0, std::numeric_limits<double>::infinity()};
    case PenaltyKind::SCAD: return {1.0 / (reg.shape - 1.0), reg.shape};
    case PenaltyKind::MCP: return {1.0 / reg.shape, reg.shape};
  }
  return {0.0, 0.0};
}

/// Coordinate-wise soft-thresholding sign(z)(|z| - t)_+; |z| = t maps to 0.
inline Eigen::VectorXd soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& z, double t) {
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double m = std::abs(z[i]) - t;
    out[i] = m > 0.0 ? std::copysign(m, z[i]) : 0.0;
  }
  return out;
}

namespace detail {

inline double shrunk_l1(const Eigen::Ref<const Eigen::VectorXd>& z, double t) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += std::max(0.0, std::abs(z[i]) - t);
  return s;
}

}  // namespace detail

/// argmin_b 1/2 ||b - z||^2 + threshold ||b||_1  s.t.  ||b||_1 <= R.
///
/// When plain soft-thresholding violates the ball, the KKT conditions give
/// soft-thresholding at threshold + theta, where theta >= 0 solves
/// ||S_{threshold+theta}(z)||_1 = R. theta is bracketed by bisection on
/// [0, max|z|] and then solved exactly on the identified active set.
inline Eigen::VectorXd prox_l1_constrained(const Eigen::Ref<const Eigen::VectorXd>& z, double threshold, double R) {
  if (!(R > 0.0)) throw DomainError("prox_l1_constrained: R must be positive");
  if (threshold < 0.0) throw DomainError("prox_l1_constrained: threshold must be nonnegative");
  if (detail::shrunk_l1(z, threshold) <= R) return soft_threshold(z, threshold);

  double lo = 0.0;
  double hi = z.cwiseAbs().maxCoeff();
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (detail::shrunk_l1(z, threshold + mid) > R) lo = mid;
    else hi = mid;
  }

  // On the active set {|z_i| > threshold + theta} the constraint is linear in theta.
  const double mid = 0.5 * (lo + hi);
  double active_sum = 0.0;
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (std::abs(z[i]) > threshold + mid) {
      active_sum += std::abs(z[i]) - threshold;
      ++active;
    }
  }
  if (active > 0) {
    const double theta = (active_sum - R) / static_cast<double>(active);
    if (theta >= 0.0 && theta >= lo - 1e-12 && theta <= hi + 1e-12) {
      Eigen::VectorXd exact = soft_threshold(z, threshold + theta);
      if (exact.lpNorm<1>() <= R + 1e-12) return exact;
    }
  }
  return soft_threshold(z, threshold + hi);
}

}  // namespace robreg
