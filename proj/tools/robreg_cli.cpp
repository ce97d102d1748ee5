// robreg: fit, simulate and run Monte-Carlo experiments from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "robreg/csv.hpp"
#include "robreg/datagen.hpp"
#include "robreg/experiments.hpp"
#include "robreg/losses.hpp"
#include "robreg/objective.hpp"
#include "robreg/optim.hpp"
#include "robreg/regularizers.hpp"
#include "robreg/weights.hpp"

namespace {

using robreg::csv::fmt;

struct FitArgs {
  std::string data;
  std::string loss = "huber";
  std::optional<double> xi;
  std::string penalty = "l1";
  std::optional<double> shape;
  std::optional<double> lambda;
  std::optional<double> lambda_mult;
  double R = 0.0;
  std::string weights = "identity";
  double b = 3.0;
  std::string power = "linear";
  std::string B_file;
  std::string init = "zero";
  std::string init_file;
  std::string eta = "auto";
  double eta0 = 1.0;
  double tol = 1e-8;
  std::size_t max_iters = 50000;
  std::string trace_out;
  std::string reference;
  std::string out;
};

int run_fit(const FitArgs& a) {
  using namespace robreg;
  auto [X, y] = csv::read_dataset(a.data);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();

  LossSpec loss = make_loss(parse_loss_kind(a.loss));
  if (a.xi) loss.xi = *a.xi;

  RegularizerSpec reg;
  reg.kind = parse_penalty_kind(a.penalty);
  reg.shape = a.shape.value_or(reg.kind == PenaltyKind::SCAD ? 3.7 : reg.kind == PenaltyKind::MCP ? 3.0 : 0.0);
  reg.lambda = a.lambda ? *a.lambda
                        : *a.lambda_mult * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));

  std::optional<Eigen::MatrixXd> B;
  if (!a.B_file.empty()) B = csv::read_matrix_noheader(a.B_file);
  const MallowsPower power = a.power == "squared" ? MallowsPower::Squared : MallowsPower::Linear;
  const WeightScheme weights(parse_weight_kind(a.weights), a.b, power, B);

  const Problem prob(std::move(X), std::move(y), loss, weights, reg, a.R);

  SolverOptions opts;
  if (a.eta != "auto") opts.eta = csv::parse_double(a.eta);
  opts.eta0 = a.eta0;
  opts.tol = a.tol;
  opts.max_iters = a.max_iters;
  opts.record_trace = !a.trace_out.empty();
  if (!a.reference.empty()) opts.reference = csv::read_vector(a.reference);

  SolverResult res;
  std::size_t step1_iters = 0;
  if (a.init == "zero") {
    res = composite_gd(prob, Eigen::VectorXd::Zero(p), opts);
  } else if (a.init == "file") {
    if (a.init_file.empty()) throw InvalidSpec("fit: --init file needs --init-file");
    res = composite_gd(prob, csv::read_vector(a.init_file), opts);
  } else if (a.init == "two-step" || a.init == "two_step") {
    const Problem step1 = prob.with(make_loss(LossKind::Huber), RegularizerSpec{PenaltyKind::L1, reg.lambda, 0.0});
    SolverOptions opts1 = opts;
    opts1.record_trace = false;
    auto ts = two_step(step1, prob, opts1, opts);
    step1_iters = ts.step1.trace.iterations;
    res = std::move(ts.step2);
  } else {
    throw InvalidSpec("fit: --init must be zero, file or two-step");
  }

  if (!a.trace_out.empty()) {
    std::ofstream t(a.trace_out);
    if (!t) throw InvalidSpec("fit: cannot write '" + a.trace_out + "'");
    t << "iter,objective,step_size" << (opts.reference ? ",dist_to_ref" : "") << '\n';
    for (std::size_t i = 0; i < res.trace.objective.size(); ++i) {
      t << (i + 1) << ',' << fmt(res.trace.objective[i]) << ',' << fmt(res.trace.step_size[i]);
      if (opts.reference) t << ',' << fmt(res.trace.dist_to_ref[i]);
      t << '\n';
    }
  }
  if (!a.out.empty()) {
    csv::write_vector(a.out, res.beta);
  } else {
    std::cout << "beta\n";
    for (Eigen::Index j = 0; j < res.beta.size(); ++j) std::cout << fmt(res.beta[j]) << '\n';
  }
  const nlohmann::json summary = {{"n", n},
                                  {"p", p},
                                  {"loss", to_string(loss.kind)},
                                  {"xi", loss.xi},
                                  {"penalty", to_string(reg.kind)},
                                  {"lambda", reg.lambda},
                                  {"R", a.R},
                                  {"iterations", res.trace.iterations},
                                  {"step1_iterations", step1_iters},
                                  {"termination", to_string(res.trace.reason)},
                                  {"objective", objective_value(prob, res.beta)},
                                  {"stationarity_residual", res.trace.final_residual},
                                  {"nonzeros", (res.beta.array().abs() > 0.0).count()}};
  std::cerr << summary.dump() << '\n';
  return 0;
}

struct SimArgs {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  std::optional<Eigen::Index> k;
  std::string covariates = "gaussian";
  double df = 10.0;
  std::string errors = "cauchy";
  double scale = 1.0;
  double alpha = 1.0;
  double p_in = 0.7;
  double sd_in = 0.1;
  double sd_out = 10.0;
  std::uint64_t seed = 0;
  std::string out;
};

int run_simulate(const SimArgs& a) {
  using namespace robreg;
  DataSpec spec;
  spec.n = a.n;
  spec.p = a.p;
  spec.k = a.k.value_or(sparsity_for(a.p));
  spec.seed = a.seed;
  if (a.covariates == "gaussian") spec.covariates = {CovariateKind::GaussianIdentity, a.df};
  else if (a.covariates == "chi_square_centered") spec.covariates = {CovariateKind::ChiSquareCentered, a.df};
  else throw InvalidSpec("simulate: unknown covariate law '" + a.covariates + "'");
  if (a.errors == "none") spec.errors = ErrorLaw::none();
  else if (a.errors == "gaussian") spec.errors = ErrorLaw::gaussian(a.scale);
  else if (a.errors == "cauchy") spec.errors = ErrorLaw::cauchy(a.scale);
  else if (a.errors == "alpha_stable") spec.errors = ErrorLaw::alpha_stable(a.alpha, a.scale);
  else if (a.errors == "normal_mixture") spec.errors = ErrorLaw::normal_mixture(a.p_in, a.sd_in, a.sd_out);
  else throw InvalidSpec("simulate: unknown error law '" + a.errors + "'");

  const Dataset d = gen_dataset(spec);
  csv::write_dataset(a.out, d.X, d.y);

  nlohmann::json errors = {{"kind", to_string(spec.errors.kind)}};
  switch (spec.errors.kind) {
    case ErrorKind::None: break;
    case ErrorKind::Gaussian: errors["sd"] = spec.errors.scale; break;
    case ErrorKind::Cauchy: errors["scale"] = spec.errors.scale; break;
    case ErrorKind::AlphaStable:
      errors["alpha"] = spec.errors.alpha;
      errors["gamma"] = spec.errors.scale;
      break;
    case ErrorKind::NormalMixture:
      errors["p_in"] = spec.errors.p_in;
      errors["sd_in"] = spec.errors.sd_in;
      errors["sd_out"] = spec.errors.sd_out;
      break;
  }
  nlohmann::json covs = {{"kind", to_string(spec.covariates.kind)}};
  if (spec.covariates.kind == CovariateKind::ChiSquareCentered) covs["df"] = spec.covariates.df;
  std::vector<double> beta(d.beta_star.data(), d.beta_star.data() + d.beta_star.size());
  const nlohmann::json side = {{"n", spec.n},       {"p", spec.p},   {"k", spec.k},
                               {"seed", spec.seed}, {"covariates", covs}, {"errors", errors},
                               {"beta_star", beta}, {"generator", "philox4x32-10"},
                               {"version", robreg::experiments::kVersion}};
  std::ofstream j(a.out + ".json");
  if (!j) throw InvalidSpec("simulate: cannot write sidecar");
  j << side.dump(2) << '\n';
  return 0;
}

int run_experiment_cmd(const std::string& config, const std::string& out, unsigned workers, bool wall_time) {
  namespace ex = robreg::experiments;
  const ex::ExperimentConfig cfg = ex::load_config(config);
  const ex::ExperimentResults res = ex::run_experiment(cfg, {workers});
  ex::emit_report(res, out, {wall_time});
  std::cerr << cfg.name << ": " << res.trials.size() << " trial rows, " << res.failures.size() << " failures, "
            << fmt(res.total_wall_time, 4) << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized robust M-estimation for sparse linear regression"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a penalized robust regression to a CSV dataset (last column is y)");
  f->add_option("--data", fit.data, "Dataset CSV with header")->required()->check(CLI::ExistingFile);
  f->add_option("--loss", fit.loss, "huber|tukey|cauchy|squared|absolute")->capture_default_str();
  f->add_option("--xi", fit.xi, "Loss tuning constant");
  f->add_option("--penalty", fit.penalty, "l1|scad|mcp")->capture_default_str();
  f->add_option("--shape", fit.shape, "SCAD a or MCP b");
  auto* lam = f->add_option("--lambda", fit.lambda, "Regularization level");
  auto* lm = f->add_option("--lambda-mult", fit.lambda_mult, "lambda = c * sqrt(log p / n)");
  lam->excludes(lm);
  f->add_option("--R", fit.R, "l1-ball radius")->required();
  f->add_option("--weights", fit.weights, "identity|mallows|hill_ryan|schweppe")->capture_default_str();
  f->add_option("--b", fit.b, "Weight cap b")->capture_default_str();
  f->add_option("--power", fit.power, "linear|squared")->capture_default_str();
  f->add_option("--B-file", fit.B_file, "Weight matrix B (CSV, no header)");
  f->add_option("--init", fit.init, "zero|file|two-step")->capture_default_str();
  f->add_option("--init-file", fit.init_file, "Initial vector (CSV with header)");
  f->add_option("--eta", fit.eta, "auto or a fixed value")->capture_default_str();
  f->add_option("--eta0", fit.eta0, "Backtracking start")->capture_default_str();
  f->add_option("--tol", fit.tol)->capture_default_str();
  f->add_option("--max-iters", fit.max_iters)->capture_default_str();
  f->add_option("--trace-out", fit.trace_out, "Per-iteration trace CSV");
  f->add_option("--reference", fit.reference, "Vector for the dist_to_ref trace column");
  f->add_option("--out", fit.out, "Write beta here instead of stdout");

  SimArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic dataset");
  s->add_option("--n", sim.n)->required();
  s->add_option("--p", sim.p)->required();
  s->add_option("--k", sim.k, "Sparsity (default round(sqrt(p)))");
  s->add_option("--covariates", sim.covariates, "gaussian|chi_square_centered")->capture_default_str();
  s->add_option("--df", sim.df)->capture_default_str();
  s->add_option("--errors", sim.errors, "none|gaussian|cauchy|alpha_stable|normal_mixture")->capture_default_str();
  s->add_option("--scale", sim.scale, "sd, Cauchy scale or stable gamma")->capture_default_str();
  s->add_option("--alpha", sim.alpha)->capture_default_str();
  s->add_option("--p-in", sim.p_in)->capture_default_str();
  s->add_option("--sd-in", sim.sd_in)->capture_default_str();
  s->add_option("--sd-out", sim.sd_out)->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--out", sim.out, "Dataset CSV; the spec goes to <out>.json")->required();

  auto* e = app.add_subcommand("experiment", "Monte-Carlo experiments");
  e->require_subcommand(1);
  std::string config, outdir;
  unsigned workers = 1;
  bool wall_time = false;
  auto* er = e->add_subcommand("run", "Run an experiment config");
  er->add_option("config", config, "JSON config")->required()->check(CLI::ExistingFile);
  er->add_option("--out", outdir, "Output directory")->required();
  er->add_option("--workers", workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  er->add_flag("--wall-time", wall_time, "Write measured wall times into trials.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*f) {
      if (!fit.lambda && !fit.lambda_mult) throw robreg::InvalidSpec("fit: give --lambda or --lambda-mult");
      return run_fit(fit);
    }
    if (*s) return run_simulate(sim);
    if (*er) return run_experiment_cmd(config, outdir, workers, wall_time);
  } catch (const robreg::InvalidSpec& ex) {
    std::cerr << "invalid input: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
