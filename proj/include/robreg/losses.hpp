#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <string_view>

#include "robreg/errors.hpp"

namespace robreg {

enum class LossKind { Huber, Tukey, Cauchy, Squared, Absolute };

/// A robust regression loss: kind plus tuning constant xi (ignored by
/// Squared and Absolute).
struct LossSpec {
  LossKind kind = LossKind::Huber;
  double xi = 1.345;
};

/// Classical defaults (95% Gaussian efficiency for Huber/Tukey).
constexpr double default_xi(LossKind kind) {
  switch (kind) {
    case LossKind::Huber: return 1.345;
    case LossKind::Tukey: return 4.685;
    case LossKind::Cauchy: return 1.0;
    default: return 1.0;
  }
}

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Huber: return "huber";
    case LossKind::Tukey: return "tukey";
    case LossKind::Cauchy: return "cauchy";
    case LossKind::Squared: return "squared";
    case LossKind::Absolute: return "absolute";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "huber") return LossKind::Huber;
  if (name == "tukey") return LossKind::Tukey;
  if (name == "cauchy") return LossKind::Cauchy;
  if (name == "squared" || name == "ols") return LossKind::Squared;
  if (name == "absolute" || name == "lad") return LossKind::Absolute;
  throw InvalidSpec("unknown loss kind '" + std::string(name) + "'");
}

inline LossSpec make_loss(LossKind kind) { return {kind, default_xi(kind)}; }

inline void validate(const LossSpec& loss) {
  if (!(loss.xi > 0.0) || !std::isfinite(loss.xi)) throw InvalidSpec("loss xi must be positive and finite");
}

namespace loss {

// Concrete losses. Each provides value (l), psi (l') and psi_prime (l'').

struct Huber {
  double xi;
  double value(double u) const {
    const double a = std::abs(u);
    return a <= xi ? 0.5 * u * u : xi * a - 0.5 * xi * xi;
  }
  double psi(double u) const { return u > xi ? xi : (u < -xi ? -xi : u); }
  double psi_prime(double u) const {
    const double a = std::abs(u);
    if (a == xi) throw UnsupportedPoint("huber: second derivative undefined at |u| = xi");
    return a < xi ? 1.0 : 0.0;
  }
};

struct Tukey {
  double xi;
  double value(double u) const {
    if (std::abs(u) > xi) return xi * xi / 6.0;
    const double t = 1.0 - (u / xi) * (u / xi);
    return xi * xi / 6.0 * (1.0 - t * t * t);
  }
  double psi(double u) const {
    if (std::abs(u) >= xi) return 0.0;
    const double t = 1.0 - (u / xi) * (u / xi);
    return u * t * t;
  }
  double psi_prime(double u) const {
    if (std::abs(u) > xi) return 0.0;
    const double s = (u / xi) * (u / xi);
    return (1.0 - s) * (1.0 - 5.0 * s);
  }
};

struct Cauchy {
  double xi;
  double value(double u) const { return 0.5 * xi * xi * std::log1p((u / xi) * (u / xi)); }
  double psi(double u) const { return u / (1.0 + (u / xi) * (u / xi)); }
  double psi_prime(double u) const {
    const double s = (u / xi) * (u / xi);
    return (1.0 - s) / ((1.0 + s) * (1.0 + s));
  }
};

struct Squared {
  double value(double u) const { return 0.5 * u * u; }
  double psi(double u) const { return u; }
  double psi_prime(double) const { return 1.0; }
};

struct Absolute {
  double value(double u) const { return std::abs(u); }
  double psi(double u) const { return u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0); }
  double psi_prime(double) const { throw UnsupportedPoint("absolute loss has no second derivative API"); }
};

}  // namespace loss

template <class L>
concept RobustLoss = requires(const L& l, double u) {
  { l.value(u) } -> std::convertible_to<double>;
  { l.psi(u) } -> std::convertible_to<double>;
};

/// Calls f with the concrete loss functor for spec, so hot loops are
/// compiled once per loss instead of branching per residual.
template <class F>
decltype(auto) visit_loss(const LossSpec& spec, F&& f) {
  switch (spec.kind) {
    case LossKind::Huber: return f(loss::Huber{spec.xi});
    case LossKind::Tukey: return f(loss::Tukey{spec.xi});
    case LossKind::Cauchy: return f(loss::Cauchy{spec.xi});
    case LossKind::Squared: return f(loss::Squared{});
    case LossKind::Absolute: return f(loss::Absolute{});
  }
  throw InvalidSpec("unknown loss kind");
}

inline double eval_loss(const LossSpec& spec, double u) {
  detail::require_finite(u, "eval_loss");
  return visit_loss(spec, [u](const auto& l) { return l.value(u); });
}

inline double eval_psi(const LossSpec& spec, double u) {
  detail::require_finite(u, "eval_psi");
  return visit_loss(spec, [u](const auto& l) { return l.psi(u); });
}

inline double eval_psi_prime(const LossSpec& spec, double u) {
  detail::require_finite(u, "eval_psi_prime");
  return visit_loss(spec, [u](const auto& l) { return l.psi_prime(u); });
}

/// Curvature constants of a loss.
///   kappa1  = sup |l'|            (+inf for Squared)
///   kappa2  = max(0, -inf l'')
///   alpha_T = min of l'' over [-T, T]
struct LossConstants {
  double kappa1;
  double kappa2;
  double alpha_T;
};

/// All constants are closed form. Tukey l'' = (1-s)(1-5s) with s = u^2/xi^2
/// decreases on s in [0, 0.6] to -0.8 and is 0 past the rejection point;
/// Cauchy l'' = (1-s)/(1+s)^2 decreases on s in [0, 3] to -1/8. Huber reports
/// alpha_T = 0 once T passes the corner, where l'' = 0 almost everywhere.
inline LossConstants loss_constants(const LossSpec& spec, double T) {
  detail::require_finite(T, "loss_constants");
  if (T < 0.0) throw DomainError("loss_constants: T must be nonnegative");
  const double xi = spec.xi;
  switch (spec.kind) {
    case LossKind::Huber:
      return {xi, 0.0, T <= xi ? 1.0 : 0.0};
    case LossKind::Tukey: {
      const double s = std::min((T / xi) * (T / xi), 0.6);
      return {16.0 * xi / (25.0 * std::sqrt(5.0)), 0.8, (1.0 - s) * (1.0 - 5.0 * s)};
    }
    case LossKind::Cauchy: {
      const double s = std::min((T / xi) * (T / xi), 3.0);
      return {xi / 2.0, 0.125, (1.0 - s) / ((1.0 + s) * (1.0 + s))};
    }
    case LossKind::Squared:
      // l' is unbounded; +inf is the sentinel for "no bounded-derivative constant".
      return {std::numeric_limits<double>::infinity(), 0.0, 1.0};
    case LossKind::Absolute:
      throw UnsupportedPoint("absolute loss: kappa2 and alpha_T are undefined");
  }
  throw InvalidSpec("unknown loss kind");
}

/// True for the convex members of the catalog.
constexpr bool is_convex(LossKind kind) {
  return kind == LossKind::Huber || kind == LossKind::Squared || kind == LossKind::Absolute;
}

}  // namespace robreg
