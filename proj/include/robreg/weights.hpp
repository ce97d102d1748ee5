#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "robreg/errors.hpp"

namespace robreg {

enum class WeightKind { Identity, Mallows, HillRyan, Schweppe };
enum class MallowsPower { Linear, Squared };

inline std::string_view to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::Identity: return "identity";
    case WeightKind::Mallows: return "mallows";
    case WeightKind::HillRyan: return "hill_ryan";
    case WeightKind::Schweppe: return "schweppe";
  }
  return "?";
}

inline WeightKind parse_weight_kind(std::string_view name) {
  if (name == "identity" || name == "none") return WeightKind::Identity;
  if (name == "mallows") return WeightKind::Mallows;
  if (name == "hill_ryan" || name == "hillryan" || name == "hill-ryan") return WeightKind::HillRyan;
  if (name == "schweppe") return WeightKind::Schweppe;
  throw InvalidSpec("unknown weight scheme '" + std::string(name) + "'");
}

/// Generalized M-estimator weights (w, v): the loss becomes
/// (1/n) sum_i w(x_i)/v(x_i) * l((x_i^T beta - y_i) v(x_i)).
///
/// B defaults to the identity. A general B must be invertible; its inverse
/// operator norm is cached for the leverage bound ||w(x) x|| <= b ||B^{-1}||.
class WeightScheme {
 public:
  WeightScheme() = default;

  static WeightScheme identity() { return WeightScheme{}; }

  static WeightScheme mallows(double b, MallowsPower power = MallowsPower::Linear) {
    return WeightScheme(WeightKind::Mallows, b, power, std::nullopt);
  }
  static WeightScheme hill_ryan(double b, MallowsPower power = MallowsPower::Linear) {
    return WeightScheme(WeightKind::HillRyan, b, power, std::nullopt);
  }
  static WeightScheme schweppe() { return WeightScheme(WeightKind::Schweppe, 1.0, MallowsPower::Linear, std::nullopt); }

  WeightScheme(WeightKind kind, double b, MallowsPower power, std::optional<Eigen::MatrixXd> B)
      : kind_(kind), b_(b), power_(power), B_(std::move(B)) {
    if (kind_ != WeightKind::Identity && kind_ != WeightKind::Schweppe && !(b_ > 0.0))
      throw InvalidSpec("weight scheme: b must be positive");
    if (B_) {
      if (B_->rows() != B_->cols()) throw InvalidSpec("weight scheme: B must be square");
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(*B_);
      const double smin = svd.singularValues().minCoeff();
      if (!(smin > 0.0)) throw InvalidSpec("weight scheme: B must be invertible");
      inv_opnorm_ = 1.0 / smin;
    }
  }

  WeightKind kind() const { return kind_; }
  double b() const { return b_; }
  MallowsPower power() const { return power_; }
  const std::optional<Eigen::MatrixXd>& B() const { return B_; }

  /// ||B^{-1}||_op (1 for the default identity B).
  double inverse_opnorm() const { return inv_opnorm_; }

  /// b * ||B^{-1}||_op: the bound on ||w(x) x||_2 for Mallows / Hill-Ryan.
  double leverage_bound() const { return b_ * inv_opnorm_; }

  double scaled_norm(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (!B_) return x.norm();
    if (B_->cols() != x.size()) throw DomainError("weight scheme: B and x dimension mismatch");
    return (*B_ * x).norm();
  }

 private:
  WeightKind kind_ = WeightKind::Identity;
  double b_ = 1.0;
  MallowsPower power_ = MallowsPower::Linear;
  std::optional<Eigen::MatrixXd> B_;
  double inv_opnorm_ = 1.0;
};

namespace detail {

inline double capped_weight(const WeightScheme& s, double bx) {
  if (bx <= s.b()) return 1.0;
  const double r = s.b() / bx;
  return s.power() == MallowsPower::Squared ? r * r : r;
}

inline void require_finite_vec(const Eigen::Ref<const Eigen::VectorXd>& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite input");
}

}  // namespace detail

inline double weight_w(const WeightScheme& s, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::require_finite_vec(x, "weight_w");
  switch (s.kind()) {
    case WeightKind::Identity: return 1.0;
    case WeightKind::Mallows:
    case WeightKind::HillRyan: return detail::capped_weight(s, s.scaled_norm(x));
    case WeightKind::Schweppe: {
      const double bx = s.scaled_norm(x);
      if (bx == 0.0) throw DomainError("schweppe weight: degenerate leverage ||Bx|| = 0");
      return 1.0 / bx;
    }
  }
  return 1.0;
}

inline double weight_v(const WeightScheme& s, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::require_finite_vec(x, "weight_v");
  switch (s.kind()) {
    case WeightKind::Identity:
    case WeightKind::Mallows: return 1.0;
    case WeightKind::HillRyan: return detail::capped_weight(s, s.scaled_norm(x));
    case WeightKind::Schweppe: {
      const double bx = s.scaled_norm(x);
      if (bx == 0.0) throw DomainError("schweppe weight: degenerate leverage ||Bx|| = 0");
      return bx;
    }
  }
  return 1.0;
}

}  // namespace robreg
