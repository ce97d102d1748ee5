#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "robreg/datagen.hpp"
#include "robreg/optim.hpp"
#include "robreg/oracle.hpp"
#include "robreg/rng.hpp"

using namespace robreg;

namespace {

Eigen::MatrixXd randn(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

Eigen::VectorXd randv(Rng& rng, Eigen::Index p, double sd = 1.0) {
  Eigen::VectorXd v(p);
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

Problem one_dim(double x, double y, LossKind k, RegularizerSpec reg, double R = 10.0) {
  Eigen::MatrixXd X(1, 1);
  X << x;
  Eigen::VectorXd Y(1);
  Y << y;
  return Problem(X, Y, make_loss(k), WeightScheme::identity(), reg, R);
}

SolverOptions tight() {
  SolverOptions o;
  o.tol = 1e-13;
  o.max_iters = 200000;
  return o;
}

}  // namespace

TEST(CompositeGd, OneStepHandExample) {
  const Problem p = one_dim(1.0, 1.0, LossKind::Squared, {PenaltyKind::L1, 0.25, 0.0});
  SolverOptions o;
  o.eta = 1.0;
  o.max_iters = 1;
  const auto res = composite_gd(p, Eigen::VectorXd::Zero(1), o);
  EXPECT_DOUBLE_EQ(res.beta[0], 0.75);
  EXPECT_EQ(res.trace.iterations, 1u);
  EXPECT_EQ(res.trace.reason, Termination::MaxIterations);
}

TEST(CompositeGd, MatchesCoordinateDescentLassoSmall) {
  Rng rng(1);
  const Eigen::MatrixXd X = randn(rng, 20, 5);
  const Eigen::VectorXd y = X * randv(rng, 5) + randv(rng, 20, 0.5);
  const double lam = 0.3 * (X.transpose() * y / 20.0).lpNorm<Eigen::Infinity>();
  const Problem p(X, y, make_loss(LossKind::Squared), WeightScheme::identity(), {PenaltyKind::L1, lam, 0.0}, 1e3);
  const auto res = composite_gd(p, Eigen::VectorXd::Zero(5), tight());
  const Eigen::VectorXd cd = oracle::cd_lasso(X, y, lam);
  EXPECT_NEAR(objective_value(p, res.beta), oracle::lasso_objective(X, y, cd, lam), 1e-8);
}

TEST(CompositeGd, LargeLambdaGivesZero) {
  Rng rng(2);
  const Eigen::MatrixXd X = randn(rng, 20, 5);
  const Eigen::VectorXd y = randv(rng, 20);
  // Slightly above the exact threshold so rounding cannot leave a 1e-16 entry.
  const double lam = 1.001 * (X.transpose() * y / 20.0).lpNorm<Eigen::Infinity>();
  const Problem p(X, y, make_loss(LossKind::Squared), WeightScheme::identity(), {PenaltyKind::L1, lam, 0.0}, 10.0);
  const auto res = composite_gd(p, Eigen::VectorXd::Zero(5));
  EXPECT_EQ(res.beta, Eigen::VectorXd::Zero(5));
  EXPECT_EQ(res.trace.reason, Termination::Converged);
}

TEST(CompositeGd, Errors) {
  Rng rng(3);
  const Problem p(randn(rng, 10, 3), randv(rng, 10), make_loss(LossKind::Huber), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.1, 0.0}, 1.0);
  EXPECT_THROW(composite_gd(p, Eigen::VectorXd::Constant(3, 1.0)), DomainError);
  EXPECT_THROW(composite_gd(p, Eigen::VectorXd::Zero(4)), DomainError);
  SolverOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(composite_gd(p, Eigen::VectorXd::Zero(3), bad), InvalidSpec);
  bad = {};
  bad.max_iters = 0;
  EXPECT_THROW(composite_gd(p, Eigen::VectorXd::Zero(3), bad), InvalidSpec);
  bad = {};
  bad.eta = -1.0;
  EXPECT_THROW(composite_gd(p, Eigen::VectorXd::Zero(3), bad), InvalidSpec);
  const Problem ball = p.with_ball(LocalBall{Eigen::VectorXd::Zero(3), 1.0});
  EXPECT_THROW(composite_gd(ball, Eigen::VectorXd::Zero(3)), InvalidSpec);
}

TEST(CompositeGd, NonFiniteGradientReportsIteration) {
  // A fixed step far too long for squared loss makes the iterates blow up.
  Rng rng(4);
  const Eigen::MatrixXd X = 100.0 * randn(rng, 10, 3);
  const Problem p(X, randv(rng, 10), make_loss(LossKind::Squared), WeightScheme::identity(),
                  {PenaltyKind::L1, 1e-3, 0.0}, 1e300);
  SolverOptions o;
  o.eta = 1e-6;
  o.max_iters = 100000;
  try {
    composite_gd(p, Eigen::VectorXd::Zero(3), o);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.iteration(), 0u);
  }
}

TEST(CompositeGd, ZeroRadiusIsTrivial) {
  Rng rng(5);
  const Problem p(randn(rng, 10, 3), randv(rng, 10), make_loss(LossKind::Huber), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.1, 0.0}, 0.0);
  const auto res = composite_gd(p, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(res.trace.reason, Termination::Trivial);
  EXPECT_EQ(res.beta, Eigen::VectorXd::Zero(3));
}

TEST(CompositeGd, FeasibilityAndMonotoneDescent) {
  Rng rng(6);
  for (auto k : {LossKind::Huber, LossKind::Tukey, LossKind::Cauchy}) {
    for (auto pen : {RegularizerSpec{PenaltyKind::L1, 0.1, 0}, RegularizerSpec{PenaltyKind::SCAD, 0.1, 2.5},
                     RegularizerSpec{PenaltyKind::MCP, 0.1, 3.0}}) {
      const Eigen::MatrixXd X = randn(rng, 80, 20);
      Eigen::VectorXd bs = Eigen::VectorXd::Zero(20);
      bs.head(4).setConstant(0.5);
      Eigen::VectorXd y = X * bs;
      for (auto& v : y) v += 0.3 * std::tan(3.14159 * (rng.uniform_open() - 0.5));
      const double R = 1.1 * bs.lpNorm<1>();
      const Problem p(X, y, make_loss(k), WeightScheme::identity(), pen, R);
      SolverOptions o;
      o.max_iters = 3000;
      const auto res = composite_gd(p, Eigen::VectorXd::Zero(20), o);
      ASSERT_EQ(res.trace.objective.size(), res.trace.iterations);
      double prev = objective_value(p, Eigen::VectorXd::Zero(20));
      for (double v : res.trace.objective) {
        ASSERT_LE(v, prev + 1e-10) << to_string(k) << '/' << to_string(pen.kind);
        prev = v;
      }
      EXPECT_LE(res.beta.lpNorm<1>(), R + 1e-10);
      // The recorded surrogate value equals L_n + rho_lambda.
      EXPECT_NEAR(res.trace.objective.back(), objective_value(p, res.beta), 1e-10);
    }
  }
}

TEST(CompositeGd, EveryIterateFeasible) {
  Rng rng(7);
  const Eigen::MatrixXd X = randn(rng, 50, 30);
  const Eigen::VectorXd y = randv(rng, 50, 3.0);
  const double R = 0.7;
  const Problem p(X, y, make_loss(LossKind::Huber), WeightScheme::identity(), {PenaltyKind::L1, 0.01, 0}, R);
  SolverOptions o;
  o.max_iters = 1;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(30);
  for (int t = 0; t < 300; ++t) {
    b = composite_gd(p, b, o).beta;
    ASSERT_LE(b.lpNorm<1>(), R + 1e-10);
  }
}

TEST(CompositeGd, DeterministicTraces) {
  Rng rng(8);
  const Problem p(randn(rng, 40, 10), randv(rng, 40), make_loss(LossKind::Cauchy), WeightScheme::mallows(3.0),
                  {PenaltyKind::SCAD, 0.05, 3.7}, 3.0);
  const auto a = composite_gd(p, Eigen::VectorXd::Zero(10));
  const auto b = composite_gd(p, Eigen::VectorXd::Zero(10));
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.trace.objective, b.trace.objective);
  EXPECT_EQ(a.trace.step_size, b.trace.step_size);
}

TEST(CompositeGd, TraceRecordsDistanceToReference) {
  Rng rng(9);
  const Problem p(randn(rng, 40, 10), randv(rng, 40), make_loss(LossKind::Huber), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.05, 0}, 3.0);
  SolverOptions o;
  o.reference = Eigen::VectorXd::Zero(10);
  const auto r = composite_gd(p, Eigen::VectorXd::Zero(10), o);
  ASSERT_EQ(r.trace.dist_to_ref.size(), r.trace.iterations);
  EXPECT_NEAR(r.trace.dist_to_ref.back(), r.beta.norm(), 1e-15);
}

TEST(CompositeGd, LinearConvergenceOnConvexInstance) {
  DataSpec spec{400, 64, 8, {}, ErrorLaw::cauchy(0.1), 17};
  const Dataset d = gen_dataset(spec);
  const double lam = 0.3 * std::sqrt(std::log(64.0) / 400.0);
  const Problem p(d.X, d.y, make_loss(LossKind::Huber), WeightScheme::identity(), {PenaltyKind::L1, lam, 0},
                  1.1 * d.beta_star.lpNorm<1>());
  const auto ref = composite_gd(p, Eigen::VectorXd::Zero(64), tight());
  SolverOptions o = tight();
  o.reference = ref.beta;
  Rng rng(3);
  Eigen::VectorXd b0(64);
  for (auto& v : b0) v = 6.0 * rng.normal();
  const auto run = composite_gd(p, prox_l1_constrained(b0, 0.0, p.R()), o);
  std::vector<double> ts, ls;
  for (std::size_t t = 0; t < run.trace.dist_to_ref.size(); ++t) {
    const double e = run.trace.dist_to_ref[t];
    if (e >= 1e-8 && e <= 1e-2) {
      ts.push_back(static_cast<double>(t));
      ls.push_back(std::log(e));
    }
  }
  ASSERT_GE(ts.size(), 5u);
  const double m = static_cast<double>(ts.size());
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) mt += ts[i], ml += ls[i];
  mt /= m;
  ml /= m;
  double stt = 0, stl = 0, sll = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stl += (ts[i] - mt) * (ls[i] - ml);
    sll += (ls[i] - ml) * (ls[i] - ml);
  }
  const double slope = stl / stt;
  const double r2 = stl * stl / (stt * sll);
  EXPECT_LT(slope, 0.0);
  EXPECT_GE(r2, 0.9);
}

TEST(Backtracking, SquaredLossAcceptsLipschitzConstant) {
  Rng rng(10);
  const Eigen::MatrixXd X = randn(rng, 30, 6);
  const Problem p(X, randv(rng, 30), make_loss(LossKind::Squared), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.05, 0}, 10.0);
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(X.transpose() * X / 30.0).eigenvalues().maxCoeff();
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd b = prox_l1_constrained(randv(rng, 6), 0.0, 10.0);
    const double eta = backtracking_step(p, b, 1e-3);
    EXPECT_LE(eta, 2.0 * L + 1e-12);
    // Starting at or above L, the first candidate is accepted.
    EXPECT_EQ(backtracking_step(p, b, L * 1.0000001), L * 1.0000001);
  }
}

TEST(Backtracking, ZeroResidualAcceptsEta0) {
  Rng rng(11);
  const Eigen::MatrixXd X = randn(rng, 20, 4);
  const Eigen::VectorXd b = randv(rng, 4);
  const Problem p(X, X * b, make_loss(LossKind::Cauchy), WeightScheme::identity(), {PenaltyKind::L1, 1e-3, 0}, 100.0);
  // Gradient zero and prox moves b only by the threshold; eta0 = 5 is plenty.
  EXPECT_EQ(backtracking_step(p, b, 5.0), 5.0);
}

TEST(Backtracking, AcceptedEtaMajorizes) {
  Rng rng(12);
  const Problem p(randn(rng, 30, 6), randv(rng, 30, 2.0), make_loss(LossKind::Cauchy), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.05, 0}, 5.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd b = prox_l1_constrained(randv(rng, 6), 0.0, 5.0) + 1e-3 * randv(rng, 6);
    const Eigen::VectorXd bf = prox_l1_constrained(b, 0.0, 5.0);
    const double eta = backtracking_step(p, bf, 0.01);
    const auto lg = loss_and_gradient(p, bf);
    const Eigen::VectorXd cand = prox_l1_constrained(bf - lg.grad / eta, 0.05 / eta, 5.0);
    const Eigen::VectorXd d = cand - bf;
    EXPECT_LE(loss_value(p, cand), lg.value + lg.grad.dot(d) + 0.5 * eta * d.squaredNorm() + 1e-12);
  }
  EXPECT_THROW(backtracking_step(p, Eigen::VectorXd::Zero(6), 0.0), DomainError);
}

TEST(TwoStep, SameConvexTargetIsFixedPoint) {
  Rng rng(13);
  const Problem p(randn(rng, 60, 10), randv(rng, 60), make_loss(LossKind::Huber), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.05, 0}, 3.0);
  const auto r = two_step(p, p, tight(), tight());
  EXPECT_LE((r.beta - r.step1.beta).norm(), 1e-10);
}

TEST(TwoStep, Preconditions) {
  Rng rng(14);
  const Problem p(randn(rng, 30, 5), randv(rng, 30), make_loss(LossKind::Huber), WeightScheme::identity(),
                  {PenaltyKind::L1, 0.05, 0}, 3.0);
  const Problem tukey = p.with(make_loss(LossKind::Tukey), {PenaltyKind::L1, 0.05, 0});
  EXPECT_THROW(two_step(tukey, p), InvalidSpec);
  EXPECT_THROW(two_step(p.with(make_loss(LossKind::Huber), {PenaltyKind::SCAD, 0.05, 3.7}), tukey), InvalidSpec);
  const Problem other(randn(rng, 30, 5), randv(rng, 30), make_loss(LossKind::Tukey), WeightScheme::identity(),
                      {PenaltyKind::L1, 0.05, 0}, 3.0);
  EXPECT_THROW(two_step(p, other), InvalidSpec);
  const Problem wider(randn(rng, 30, 6), randv(rng, 30), make_loss(LossKind::Tukey), WeightScheme::identity(),
                      {PenaltyKind::L1, 0.05, 0}, 3.0);
  EXPECT_THROW(two_step(p, wider), InvalidSpec);
  const Problem otherR(p.X(), p.y(), make_loss(LossKind::Tukey), WeightScheme::identity(), {PenaltyKind::L1, 0.05, 0}, 2.0);
  EXPECT_THROW(two_step(p, otherR), InvalidSpec);
}

TEST(TwoStep, TukeyRefinementDoesNotHurt) {
  int ok = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    DataSpec spec{10 * 11 * static_cast<Eigen::Index>(std::lround(std::log(128.0))), 128, 11, {}, ErrorLaw::cauchy(0.1),
                  derive_seed(99, {s})};
    spec.n = std::lround(10.0 * 11 * std::log(128.0));
    const Dataset d = gen_dataset(spec);
    const double lam = 0.3 * std::sqrt(std::log(128.0) / spec.n);
    const Problem h(d.X, d.y, make_loss(LossKind::Huber), WeightScheme::identity(), {PenaltyKind::L1, lam, 0},
                    1.1 * d.beta_star.lpNorm<1>());
    const auto r = two_step(h, h.with(make_loss(LossKind::Tukey), {PenaltyKind::L1, lam, 0}));
    if ((r.beta - d.beta_star).norm() <= 1.05 * (r.step1.beta - d.beta_star).norm()) ++ok;
  }
  EXPECT_GE(ok, 19);
}

TEST(TwoStep, ScadSupportWithinStep1UnionTruth) {
  DataSpec spec{2000, 64, 8, {}, ErrorLaw::cauchy(0.1), 5};
  const Dataset d = gen_dataset(spec);
  const double lam = std::sqrt(std::log(64.0) / 2000.0);
  const Problem h(d.X, d.y, make_loss(LossKind::Huber), WeightScheme::identity(), {PenaltyKind::L1, lam, 0},
                  1.1 * d.beta_star.lpNorm<1>());
  const auto r = two_step(h, h.with(make_loss(LossKind::Huber), {PenaltyKind::SCAD, lam, 2.5}));
  const auto s1 = support_of(r.step1.beta, 1e-6);
  for (auto j : support_of(r.beta, 1e-6)) {
    const bool in_s1 = std::find(s1.begin(), s1.end(), j) != s1.end();
    EXPECT_TRUE(in_s1 || j < 8) << j;
  }
}
