#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "robreg/errors.hpp"
#include "robreg/rng.hpp"

namespace robreg {

enum class CovariateKind { GaussianIdentity, ChiSquareCentered };

struct CovariateLaw {
  CovariateKind kind = CovariateKind::GaussianIdentity;
  double df = 10.0;  // ChiSquareCentered only
};

enum class ErrorKind { None, Gaussian, Cauchy, AlphaStable, NormalMixture };

/// Additive error law. `scale` is the Gaussian sd, the Cauchy scale or the
/// stable gamma depending on kind.
struct ErrorLaw {
  ErrorKind kind = ErrorKind::None;
  double scale = 1.0;
  double alpha = 1.0;    // AlphaStable
  double p_in = 0.7;     // NormalMixture: probability of the inlier component
  double sd_in = 0.1;
  double sd_out = 10.0;

  static ErrorLaw none() { return {}; }
  static ErrorLaw gaussian(double sd) { return {ErrorKind::Gaussian, sd}; }
  static ErrorLaw cauchy(double scale) { return {ErrorKind::Cauchy, scale}; }
  static ErrorLaw alpha_stable(double alpha, double gamma) { return {ErrorKind::AlphaStable, gamma, alpha}; }
  static ErrorLaw normal_mixture(double p_in, double sd_in, double sd_out) {
    return {ErrorKind::NormalMixture, 1.0, 1.0, p_in, sd_in, sd_out};
  }
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::None: return "none";
    case ErrorKind::Gaussian: return "gaussian";
    case ErrorKind::Cauchy: return "cauchy";
    case ErrorKind::AlphaStable: return "alpha_stable";
    case ErrorKind::NormalMixture: return "normal_mixture";
  }
  return "?";
}

inline std::string_view to_string(CovariateKind k) {
  switch (k) {
    case CovariateKind::GaussianIdentity: return "gaussian";
    case CovariateKind::ChiSquareCentered: return "chi_square_centered";
  }
  return "?";
}

struct DataSpec {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index k = 0;
  CovariateLaw covariates;
  ErrorLaw errors;
  std::uint64_t seed = 0;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd beta_star;
  Eigen::VectorXd epsilon;
};

inline void validate(const ErrorLaw& e) {
  switch (e.kind) {
    case ErrorKind::None: break;
    case ErrorKind::Gaussian:
    case ErrorKind::Cauchy:
      if (!(e.scale > 0.0)) throw InvalidSpec("error law: scale must be positive");
      break;
    case ErrorKind::AlphaStable:
      if (!(e.scale > 0.0)) throw InvalidSpec("error law: gamma must be positive");
      if (!(e.alpha > 0.0 && e.alpha <= 2.0)) throw InvalidSpec("error law: alpha must lie in (0, 2]");
      break;
    case ErrorKind::NormalMixture:
      if (!(e.p_in >= 0.0 && e.p_in <= 1.0)) throw InvalidSpec("error law: p_in must lie in [0, 1]");
      if (!(e.sd_in > 0.0 && e.sd_out > 0.0)) throw InvalidSpec("error law: mixture sds must be positive");
      break;
  }
}

inline void validate(const DataSpec& s) {
  if (s.n < 1 || s.p < 1 || s.k < 1) throw InvalidSpec("data spec: n, p, k must be positive");
  if (s.k > s.p) throw InvalidSpec("data spec: k must not exceed p");
  if (s.covariates.kind == CovariateKind::ChiSquareCentered && !(s.covariates.df > 0.0))
    throw InvalidSpec("data spec: chi-square df must be positive");
  validate(s.errors);
}

/// Sparsity rule k = round(sqrt(p)).
inline Eigen::Index sparsity_for(Eigen::Index p) {
  return static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(p))));
}

/// (1/sqrt(k), ..., 1/sqrt(k), 0, ..., 0).
inline Eigen::VectorXd gen_beta_star(Eigen::Index k, Eigen::Index p) {
  if (k < 1 || p < 1) throw DomainError("gen_beta_star: k and p must be positive");
  if (k > p) throw DomainError("gen_beta_star: k must not exceed p");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  b.head(k).setConstant(1.0 / std::sqrt(static_cast<double>(k)));
  return b;
}

/// Symmetric alpha-stable draw with characteristic function
/// exp(-gamma^alpha |t|^alpha), by the Chambers-Mallows-Stuck transform.
inline double alpha_stable_sample(double alpha, double gamma, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha_stable_sample: alpha must lie in (0, 2]");
  if (!(gamma > 0.0)) throw DomainError("alpha_stable_sample: gamma must be positive");
  const double v = std::numbers::pi * (rng.uniform_open() - 0.5);
  if (alpha == 1.0) return gamma * std::tan(v);
  const double w = rng.exponential();
  const double x = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
                   std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
  return gamma * x;
}

inline double draw_error(const ErrorLaw& e, Rng& rng) {
  switch (e.kind) {
    case ErrorKind::None: return 0.0;
    case ErrorKind::Gaussian: return e.scale * rng.normal();
    case ErrorKind::Cauchy: return e.scale * std::tan(std::numbers::pi * (rng.uniform_open() - 0.5));
    case ErrorKind::AlphaStable: return alpha_stable_sample(e.alpha, e.scale, rng);
    case ErrorKind::NormalMixture: {
      const bool inlier = rng.bernoulli(e.p_in);
      return (inlier ? e.sd_in : e.sd_out) * rng.normal();
    }
  }
  return 0.0;
}

inline double draw_covariate(const CovariateLaw& c, Rng& rng) {
  switch (c.kind) {
    case CovariateKind::GaussianIdentity: return rng.normal();
    case CovariateKind::ChiSquareCentered: return rng.chi_square(c.df) - c.df;
  }
  return 0.0;
}

// Stream ids under the dataset seed. Covariates and errors use separate
// streams, so changing the error law leaves X untouched.
inline constexpr std::uint64_t kCovariateStream = 1;
inline constexpr std::uint64_t kErrorStream = 2;

inline Eigen::MatrixXd gen_design(const DataSpec& spec) {
  Rng rng(spec.seed, kCovariateStream);
  Eigen::MatrixXd X(spec.n, spec.p);
  for (Eigen::Index i = 0; i < spec.n; ++i)
    for (Eigen::Index j = 0; j < spec.p; ++j) X(i, j) = draw_covariate(spec.covariates, rng);
  return X;
}

inline Eigen::VectorXd gen_errors(const ErrorLaw& law, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, kErrorStream);
  Eigen::VectorXd eps(n);
  for (Eigen::Index i = 0; i < n; ++i) eps[i] = draw_error(law, rng);
  return eps;
}

/// y = X beta* + eps, deterministic in spec.seed.
inline Dataset gen_dataset(const DataSpec& spec) {
  validate(spec);
  Dataset d;
  d.X = gen_design(spec);
  d.beta_star = gen_beta_star(spec.k, spec.p);
  d.epsilon = gen_errors(spec.errors, spec.n, spec.seed);
  d.y = d.X * d.beta_star + d.epsilon;
  return d;
}

/// Fraction of trials in which ||X^T eps / n||_inf >= lambda_mult sqrt(log p / n),
/// i.e. in which the Lasso's zero-noise-gradient condition fails. Trial t uses
/// seed derive_seed(spec.seed, {t}).
inline double lasso_gradient_tail_probe(const DataSpec& spec, double lambda_mult, std::size_t trials) {
  validate(spec);
  if (trials == 0) throw DomainError("lasso_gradient_tail_probe: trials must be positive");
  if (spec.errors.kind == ErrorKind::None) throw InvalidSpec("lasso_gradient_tail_probe: error law must be random");
  const double n = static_cast<double>(spec.n);
  const double lambda = lambda_mult * std::sqrt(std::log(static_cast<double>(spec.p)) / n);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    DataSpec s = spec;
    s.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(t)});
    const Eigen::MatrixXd X = gen_design(s);
    const Eigen::VectorXd eps = gen_errors(s.errors, s.n, s.seed);
    const double sup = (X.transpose() * eps / n).lpNorm<Eigen::Infinity>();
    if (sup >= lambda) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace robreg
