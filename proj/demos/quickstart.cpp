// Fit Huber+L1 and a two-step Tukey+SCAD estimator to Cauchy-noise data.

#include <cmath>
#include <cstdio>

#include "robreg/datagen.hpp"
#include "robreg/objective.hpp"
#include "robreg/optim.hpp"
#include "robreg/oracle.hpp"

int main() {
  using namespace robreg;

  DataSpec spec;
  spec.p = 128;
  spec.k = sparsity_for(spec.p);
  spec.n = static_cast<Eigen::Index>(std::lround(10.0 * spec.k * std::log(128.0)));
  spec.errors = ErrorLaw::cauchy(0.1);
  spec.seed = 7;
  const Dataset d = gen_dataset(spec);

  const double lambda = 0.3 * std::sqrt(std::log(static_cast<double>(spec.p)) / static_cast<double>(spec.n));
  const double R = 1.1 * d.beta_star.lpNorm<1>();

  const Problem huber(d.X, d.y, make_loss(LossKind::Huber), WeightScheme::identity(),
                      {PenaltyKind::L1, lambda, 0.0}, R);
  const Problem tukey = huber.with(make_loss(LossKind::Tukey), {PenaltyKind::SCAD, lambda, 2.5});

  const TwoStepResult fit = two_step(huber, tukey);
  std::printf("n=%td p=%td k=%td lambda=%.4f\n", spec.n, spec.p, spec.k, lambda);
  std::printf("huber+l1:   l2 error %.4f (%zu iterations)\n", (fit.step1.beta - d.beta_star).norm(),
              fit.step1.trace.iterations);
  std::printf("tukey+scad: l2 error %.4f (%zu iterations), support recovered: %s\n",
              (fit.beta - d.beta_star).norm(), fit.step2.trace.iterations,
              support_recovered(fit.beta, support_of(d.beta_star)) ? "yes" : "no");
  return 0;
}
