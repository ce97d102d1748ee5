#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "robreg/errors.hpp"
#include "robreg/objective.hpp"
#include "robreg/rng.hpp"

namespace robreg {

using Support = std::vector<Eigen::Index>;

/// Indices j with |beta_j| > zero_tol.
inline Support support_of(const Eigen::Ref<const Eigen::VectorXd>& beta, double zero_tol = 0.0) {
  Support s;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (std::abs(beta[j]) > zero_tol) s.push_back(j);
  return s;
}

struct OracleOptions {
  std::size_t max_iters = 100000;
  double tol = 1e-13;
};

struct OracleResult {
  Eigen::VectorXd beta_oracle;  // length p, zero off the support
  Support support;
  std::size_t iterations = 0;
  bool radius_active = false;
};

namespace detail {

inline Eigen::VectorXd project_l2_ball(const Eigen::VectorXd& z, const Eigen::VectorXd& center, double r) {
  const Eigen::VectorXd d = z - center;
  const double norm = d.norm();
  if (norm <= r) return z;
  return center + d * (r / norm);
}

}  // namespace detail

/// Local oracle estimator: minimizes the unpenalized L_n over vectors
/// supported on `support` with ||beta - beta_star||_2 <= r, by projected
/// gradient descent with backtracking on the |S|-dimensional problem.
inline OracleResult solve_oracle(const Problem& prob, std::span<const Eigen::Index> support,
                                 const Eigen::Ref<const Eigen::VectorXd>& beta_star, double r,
                                 const OracleOptions& opts = {}) {
  prob.require_dim(beta_star);
  if (!(r > 0.0)) throw DomainError("solve_oracle: radius must be positive");
  if (static_cast<Eigen::Index>(support.size()) > prob.n()) throw DomainError("solve_oracle: |S| exceeds n");

  OracleResult out;
  out.support.assign(support.begin(), support.end());
  out.beta_oracle = Eigen::VectorXd::Zero(prob.p());
  if (support.empty()) return out;

  const Problem sub = prob.restricted(support);
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::VectorXd center(k);
  for (Eigen::Index c = 0; c < k; ++c) center[c] = beta_star[support[static_cast<std::size_t>(c)]];

  Eigen::VectorXd b = center;
  LossAndGradient cur = loss_and_gradient(sub, b);
  double eta = 1.0;
  bool converged = false;
  for (std::size_t t = 0; t < opts.max_iters; ++t) {
    Eigen::VectorXd cand;
    LossAndGradient ce;
    for (int dbl = 0;; ++dbl) {
      if (dbl > 60) throw SolverError("solve_oracle: curvature estimation failed", t);
      cand = detail::project_l2_ball(b - cur.grad / eta, center, r);
      ce = loss_and_gradient(sub, cand);
      const Eigen::VectorXd d = cand - b;
      const double dd = d.squaredNorm();
      if (ce.value <= cur.value + cur.grad.dot(d) + 0.5 * eta * dd + 1e-15 * (1.0 + std::abs(cur.value))) break;
      // Near the optimum the value test drowns in rounding when |L_n| is large;
      // fall back to the gradient form of the curvature condition.
      if (std::abs(ce.value - cur.value) <= 1e-10 * (1.0 + std::abs(cur.value)) &&
          (ce.grad - cur.grad).dot(d) <= eta * dd)
        break;
      eta *= 2.0;
    }
    const double change = (cand - b).norm();
    b = std::move(cand);
    cur = std::move(ce);
    out.iterations = t + 1;
    if (change <= opts.tol * std::max(1.0, b.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) throw SolverError("solve_oracle: did not converge", out.iterations);

  for (Eigen::Index c = 0; c < k; ++c) out.beta_oracle[support[static_cast<std::size_t>(c)]] = b[c];
  out.radius_active = (b - center).norm() >= r * (1.0 - 1e-9);
  return out;
}

/// True iff {j : |beta_j| > zero_tol} equals true_support exactly.
inline bool support_recovered(const Eigen::Ref<const Eigen::VectorXd>& beta_hat, std::span<const Eigen::Index> true_support,
                              double zero_tol = 1e-6) {
  Support want(true_support.begin(), true_support.end());
  std::sort(want.begin(), want.end());
  want.erase(std::unique(want.begin(), want.end()), want.end());
  return support_of(beta_hat, zero_tol) == want;
}

struct ErrorBounds {
  double l2;
  double l1;
};

/// Deterministic error bounds for local stationary points:
///   ||b - b*||_2 <= 24 lambda sqrt(k) / (4 alpha - 3 mu)
///   ||b - b*||_1 <= 96 lambda k / (4 alpha - 3 mu)
inline ErrorBounds theorem1_bounds(double lambda, double k, double alpha, double mu) {
  if (!(lambda > 0.0) || !(k > 0.0)) throw DomainError("theorem1_bounds: lambda and k must be positive");
  const double denom = 4.0 * alpha - 3.0 * mu;
  if (!(denom > 0.0)) throw DomainError("theorem1_bounds: assumption violated, need 4 alpha > 3 mu");
  return {24.0 * lambda * std::sqrt(k) / denom, 96.0 * lambda * k / denom};
}

/// Lambda lower bound max{4 ||grad L_n(b*)||_inf, 8 tau R log p / n}.
inline double lambda_lower_bound(double grad_supnorm, double tau, double R, Eigen::Index p, Eigen::Index n) {
  return std::max(4.0 * grad_supnorm,
                  8.0 * tau * R * std::log(static_cast<double>(p)) / static_cast<double>(n));
}

struct RscStats {
  std::vector<double> ratios;  // <grad L(b1) - grad L(b2), b1 - b2> / ||b1 - b2||^2
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double fraction_nonpositive = 0.0;
  std::size_t rejected = 0;  // degenerate pairs resampled
};

/// Curvature statistics from a caller-supplied pair source. `next_pair`
/// returns std::pair<VectorXd, VectorXd>; pairs with b1 == b2 are rejected
/// and drawn again.
template <class PairSource>
RscStats rsc_probe_with(const Problem& prob, std::size_t num_pairs, PairSource&& next_pair) {
  if (num_pairs < 1) throw DomainError("rsc_probe: num_pairs must be >= 1");
  RscStats st;
  st.ratios.reserve(num_pairs);
  std::size_t nonpos = 0;
  while (st.ratios.size() < num_pairs) {
    auto [b1, b2] = next_pair();
    const Eigen::VectorXd d = b1 - b2;
    const double dd = d.squaredNorm();
    if (!(dd > 0.0)) {
      ++st.rejected;
      if (st.rejected > 1000 * num_pairs) throw DomainError("rsc_probe: pair source keeps producing degenerate pairs");
      continue;
    }
    const double ratio = (gradient(prob, b1) - gradient(prob, b2)).dot(d) / dd;
    st.ratios.push_back(ratio);
    if (ratio <= 0.0) ++nonpos;
  }
  std::vector<double> sorted = st.ratios;
  std::sort(sorted.begin(), sorted.end());
  st.min = sorted.front();
  const std::size_t m = sorted.size();
  st.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  double sum = 0.0;
  for (double v : st.ratios) sum += v;
  st.mean = sum / static_cast<double>(m);
  st.fraction_nonpositive = static_cast<double>(nonpos) / static_cast<double>(m);
  return st;
}

/// Uniform draw from the l2 ball of radius r around center.
inline Eigen::VectorXd sample_in_ball(Rng& rng, const Eigen::VectorXd& center, double r) {
  const auto p = center.size();
  Eigen::VectorXd g(p);
  double norm = 0.0;
  do {
    for (Eigen::Index j = 0; j < p; ++j) g[j] = rng.normal();
    norm = g.norm();
  } while (norm == 0.0);
  const double radius = r * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
  return center + g * (radius / norm);
}

/// Empirical local restricted-curvature probe: pairs (b1, b2) drawn uniformly
/// from the l2 ball of radius r around center.
inline RscStats rsc_probe(const Problem& prob, const Eigen::Ref<const Eigen::VectorXd>& center, double r,
                          std::size_t num_pairs, std::uint64_t seed) {
  prob.require_dim(center);
  if (!(r > 0.0)) throw DomainError("rsc_probe: radius must be positive");
  Rng rng(seed, 0x5253430000000000ull);
  const Eigen::VectorXd c = center;
  return rsc_probe_with(prob, num_pairs, [&] {
    Eigen::VectorXd b1 = sample_in_ball(rng, c, r);
    Eigen::VectorXd b2 = sample_in_ball(rng, c, r);
    return std::pair{std::move(b1), std::move(b2)};
  });
}

/// Sample variance (n - 1 denominator) of sqrt(n) v^T (fit_i - beta_star).
inline double empirical_variance(std::span<const Eigen::VectorXd> fits, const Eigen::Ref<const Eigen::VectorXd>& beta_star,
                                 const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index n) {
  if (fits.size() < 2) throw DomainError("empirical_variance: need at least 2 fits");
  if (std::abs(v.norm() - 1.0) > 1e-9) throw DomainError("empirical_variance: v must be a unit vector");
  if (n < 1) throw DomainError("empirical_variance: n must be positive");
  const double scale = std::sqrt(static_cast<double>(n));
  std::vector<double> terms;
  terms.reserve(fits.size());
  for (const auto& f : fits) {
    if (f.size() != beta_star.size()) throw DomainError("empirical_variance: dimension mismatch");
    terms.push_back(scale * v.dot(f - beta_star));
  }
  double mean = 0.0;
  for (double t : terms) mean += t;
  mean /= static_cast<double>(terms.size());
  double ss = 0.0;
  for (double t : terms) ss += (t - mean) * (t - mean);
  return ss / static_cast<double>(terms.size() - 1);
}

}  // namespace robreg
