#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "robreg/csv.hpp"
#include "robreg/datagen.hpp"
#include "robreg/errors.hpp"
#include "robreg/losses.hpp"
#include "robreg/objective.hpp"
#include "robreg/optim.hpp"
#include "robreg/oracle.hpp"
#include "robreg/regularizers.hpp"
#include "robreg/rng.hpp"
#include "robreg/weights.hpp"

namespace robreg::experiments {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// lambda given either absolutely or as c * sqrt(log p / n).
struct PenaltyRule {
  PenaltyKind kind = PenaltyKind::L1;
  double shape = 0.0;
  std::optional<double> lambda;
  std::optional<double> lambda_mult;

  double resolve(Eigen::Index p, Eigen::Index n) const {
    if (lambda) return *lambda;
    return *lambda_mult * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
  }
  RegularizerSpec spec(Eigen::Index p, Eigen::Index n) const { return {kind, resolve(p, n), shape}; }
};

struct WeightRule {
  WeightKind kind = WeightKind::Identity;
  double b = 3.0;
  MallowsPower power = MallowsPower::Linear;
  std::optional<Eigen::MatrixXd> B;

  WeightScheme scheme() const { return WeightScheme(kind, b, power, B); }
};

enum class InitKind { Zero, TwoStep, Random, Perturbed };

struct InitRule {
  InitKind kind = InitKind::Zero;
  double sd = 1.0;  // Random: N(0, sd^2 I); Perturbed: beta* + N(0, sd^2 I)
  LossSpec step1_loss = make_loss(LossKind::Huber);
  std::optional<PenaltyRule> step1_penalty;  // defaults to l1 at the arm's lambda rule
};

struct SolverRule {
  std::optional<double> eta;
  double eta0 = 1.0;
  std::size_t max_iters = 50000;
  double tol = 1e-8;

  SolverOptions options() const {
    SolverOptions o;
    o.eta = eta;
    o.eta0 = eta0;
    o.max_iters = max_iters;
    o.tol = tol;
    o.record_trace = false;
    return o;
  }
};

struct Arm {
  std::string name;
  LossSpec loss;
  WeightRule weights;
  PenaltyRule penalty;
  std::optional<double> R;
  double R_mult = 1.1;
  InitRule init;
  SolverRule solver;
  bool oracle = false;
  double oracle_radius = 0.5;
};

struct Cell {
  Eigen::Index p;
  Eigen::Index k;
  Eigen::Index n;
  double ratio;
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t master_seed = 0;
  std::size_t trials = 1;
  std::vector<Eigen::Index> p_values;
  std::vector<double> ratios;           // n = round(ratio * k * log p)
  std::vector<Eigen::Index> n_values;   // used when ratios is empty
  std::optional<Eigen::Index> k_fixed;  // otherwise k = round(sqrt(p))
  CovariateLaw covariates;
  ErrorLaw errors;
  std::vector<Arm> arms;
  json source;

  Eigen::Index k_for(Eigen::Index p) const { return k_fixed ? *k_fixed : sparsity_for(p); }

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (auto p : p_values) {
      const Eigen::Index k = k_for(p);
      const double klogp = static_cast<double>(k) * std::log(static_cast<double>(p));
      if (!ratios.empty()) {
        for (double r : ratios) {
          const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(r * klogp)));
          out.push_back({p, k, n, r});
        }
      } else {
        for (auto n : n_values) out.push_back({p, k, n, klogp > 0.0 ? static_cast<double>(n) / klogp : 0.0});
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Config parsing. Every arm is resolved and validated here, before any
// computation starts.

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline LossSpec parse_loss(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidSpec("config: loss needs a 'kind'");
  LossSpec l = make_loss(parse_loss_kind(lower(j.at("kind").get<std::string>())));
  if (j.contains("xi")) l.xi = j.at("xi").get<double>();
  validate(l);
  return l;
}

inline PenaltyRule parse_penalty(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidSpec("config: penalty needs a 'kind'");
  PenaltyRule r;
  r.kind = parse_penalty_kind(lower(j.at("kind").get<std::string>()));
  if (j.contains("shape")) r.shape = j.at("shape").get<double>();
  else if (r.kind == PenaltyKind::SCAD) r.shape = 3.7;
  else if (r.kind == PenaltyKind::MCP) r.shape = 3.0;
  if (j.contains("lambda")) r.lambda = j.at("lambda").get<double>();
  if (j.contains("lambda_mult")) r.lambda_mult = j.at("lambda_mult").get<double>();
  if (r.lambda.has_value() == r.lambda_mult.has_value())
    throw InvalidSpec("config: penalty needs exactly one of 'lambda' or 'lambda_mult'");
  const double probe = r.lambda ? *r.lambda : *r.lambda_mult;
  validate(RegularizerSpec{r.kind, probe, r.shape});
  return r;
}

inline WeightRule parse_weights(const json& j) {
  WeightRule w;
  if (j.is_null()) return w;
  w.kind = parse_weight_kind(lower(j.at("kind").get<std::string>()));
  if (j.contains("b")) w.b = j.at("b").get<double>();
  if (j.contains("power")) {
    const auto pw = lower(j.at("power").get<std::string>());
    if (pw == "linear") w.power = MallowsPower::Linear;
    else if (pw == "squared") w.power = MallowsPower::Squared;
    else throw InvalidSpec("config: weights power must be 'linear' or 'squared'");
  }
  if (j.contains("B_file")) w.B = csv::read_matrix_noheader(j.at("B_file").get<std::string>());
  (void)w.scheme();  // validates b and B
  return w;
}

inline ErrorLaw parse_errors(const json& j) {
  const auto kind = lower(j.at("kind").get<std::string>());
  ErrorLaw e;
  if (kind == "none") e = ErrorLaw::none();
  else if (kind == "gaussian") e = ErrorLaw::gaussian(j.value("sd", 1.0));
  else if (kind == "cauchy") e = ErrorLaw::cauchy(j.value("scale", 1.0));
  else if (kind == "alpha_stable") e = ErrorLaw::alpha_stable(j.value("alpha", 1.0), j.value("gamma", 1.0));
  else if (kind == "normal_mixture")
    e = ErrorLaw::normal_mixture(j.value("p_in", 0.7), j.value("sd_in", 0.1), j.value("sd_out", 10.0));
  else throw InvalidSpec("config: unknown error law '" + kind + "'");
  validate(e);
  return e;
}

inline CovariateLaw parse_covariates(const json& j) {
  CovariateLaw c;
  if (j.is_null()) return c;
  const auto kind = lower(j.at("kind").get<std::string>());
  if (kind == "gaussian") c.kind = CovariateKind::GaussianIdentity;
  else if (kind == "chi_square_centered") {
    c.kind = CovariateKind::ChiSquareCentered;
    c.df = j.value("df", 10.0);
  } else throw InvalidSpec("config: unknown covariate law '" + kind + "'");
  return c;
}

inline SolverRule parse_solver(const json& j, SolverRule base = {}) {
  if (j.is_null()) return base;
  if (j.contains("eta")) {
    const auto& e = j.at("eta");
    if (e.is_string()) {
      if (e.get<std::string>() != "auto") throw InvalidSpec("config: solver eta must be 'auto' or a number");
      base.eta.reset();
    } else {
      base.eta = e.get<double>();
    }
  }
  base.eta0 = j.value("eta0", base.eta0);
  base.max_iters = j.value("max_iters", base.max_iters);
  base.tol = j.value("tol", base.tol);
  validate(base.options());
  return base;
}

inline InitRule parse_init(const json& j) {
  InitRule r;
  if (j.is_null()) return r;
  const auto kind = lower(j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>());
  if (kind == "zero") r.kind = InitKind::Zero;
  else if (kind == "two_step" || kind == "two-step") r.kind = InitKind::TwoStep;
  else if (kind == "random") r.kind = InitKind::Random;
  else if (kind == "perturbed") r.kind = InitKind::Perturbed;
  else throw InvalidSpec("config: unknown init strategy '" + kind + "'");
  if (j.is_object()) {
    r.sd = j.value("sd", r.sd);
    if (j.contains("loss")) r.step1_loss = parse_loss(j.at("loss"));
    if (j.contains("penalty")) r.step1_penalty = parse_penalty(j.at("penalty"));
  }
  if (!(r.sd > 0.0)) throw InvalidSpec("config: init sd must be positive");
  if (r.kind == InitKind::TwoStep) {
    if (!(r.step1_loss.kind == LossKind::Huber || r.step1_loss.kind == LossKind::Absolute))
      throw InvalidSpec("config: two-step step 1 needs a convex bounded-derivative loss");
    if (r.step1_penalty && r.step1_penalty->kind != PenaltyKind::L1)
      throw InvalidSpec("config: two-step step 1 must use the l1 penalty");
  }
  return r;
}

template <class T>
std::vector<T> as_vector(const json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  c.source = j;
  c.name = j.value("name", std::string("experiment"));
  c.master_seed = j.value("master_seed", std::uint64_t{0});
  c.trials = j.value("trials", std::size_t{1});
  if (c.trials < 1) throw InvalidSpec("config: trials must be >= 1");
  if (!j.contains("grid")) throw InvalidSpec("config: missing 'grid'");
  const auto& g = j.at("grid");
  for (auto p : detail::as_vector<long long>(g.at("p"))) c.p_values.push_back(static_cast<Eigen::Index>(p));
  if (g.contains("ratio")) c.ratios = detail::as_vector<double>(g.at("ratio"));
  if (g.contains("n"))
    for (auto n : detail::as_vector<long long>(g.at("n"))) c.n_values.push_back(static_cast<Eigen::Index>(n));
  if (c.ratios.empty() == c.n_values.empty()) throw InvalidSpec("config: grid needs exactly one of 'ratio' or 'n'");
  for (double r : c.ratios)
    if (!(r > 0.0)) throw InvalidSpec("config: ratios must be positive");
  if (j.contains("sparsity") && j.at("sparsity").is_number_integer())
    c.k_fixed = j.at("sparsity").get<Eigen::Index>();
  c.covariates = detail::parse_covariates(j.value("covariates", json()));
  c.errors = detail::parse_errors(j.value("errors", json{{"kind", "none"}}));
  const SolverRule solver = detail::parse_solver(j.value("solver", json()));

  if (!j.contains("arms") || !j.at("arms").is_array() || j.at("arms").empty())
    throw InvalidSpec("config: need a non-empty 'arms' array");
  for (const auto& a : j.at("arms")) {
    Arm arm;
    arm.name = a.at("name").get<std::string>();
    if (arm.name.empty() || arm.name.find_first_of(",\n\"") != std::string::npos)
      throw InvalidSpec("config: arm names must be non-empty and free of commas/quotes");
    for (const auto& other : c.arms)
      if (other.name == arm.name) throw InvalidSpec("config: duplicate arm name '" + arm.name + "'");
    arm.loss = detail::parse_loss(a.at("loss"));
    arm.weights = detail::parse_weights(a.value("weights", json()));
    arm.penalty = detail::parse_penalty(a.at("penalty"));
    if (a.contains("R")) arm.R = a.at("R").get<double>();
    arm.R_mult = a.value("R_mult", 1.1);
    if (arm.R ? !(*arm.R > 0.0) : !(arm.R_mult > 0.0)) throw InvalidSpec("config: R must be positive");
    arm.init = detail::parse_init(a.value("init", json()));
    arm.solver = detail::parse_solver(a.value("solver", json()), solver);
    arm.oracle = a.value("oracle", false);
    arm.oracle_radius = a.value("oracle_radius", 0.5);
    if (!(arm.oracle_radius > 0.0)) throw InvalidSpec("config: oracle_radius must be positive");
    c.arms.push_back(std::move(arm));
  }

  for (const auto& cell : c.cells()) {
    validate(DataSpec{cell.n, cell.p, cell.k, c.covariates, c.errors, 0});
    for (const auto& arm : c.arms)
      if (arm.weights.B && arm.weights.B->rows() != cell.p)
        throw InvalidSpec("config: arm '" + arm.name + "' has a B matrix that does not match p");
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("config: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw InvalidSpec("config: " + std::string(e.what()));
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Running.

struct TrialResult {
  Eigen::Index p = 0, k = 0, n = 0;
  double ratio = 0.0;
  std::string arm;
  std::uint64_t seed = 0;
  double l2_error = 0.0;
  double l1_error = 0.0;
  bool support_recovered = false;
  double grad_supnorm = 0.0;
  std::size_t iterations = 0;
  double wall_time = 0.0;
  double vterm = 0.0;  // sqrt(n) * e_1^T (beta_hat - beta*)
  double stationarity = 0.0;
  std::optional<double> oracle_error;  // ||beta_hat - beta_oracle||_2
  Eigen::VectorXd beta_hat;
};

struct TrialFailure {
  Eigen::Index p = 0, k = 0, n = 0;
  double ratio = 0.0;
  std::string arm;
  std::uint64_t seed = 0;
  std::string reason;
};

struct AggregateRow {
  Eigen::Index p = 0, k = 0, n = 0;
  double ratio = 0.0;
  std::string arm;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double median_l2_error = 0.0;
  double mean_l2_error = 0.0;
  double median_l1_error = 0.0;
  double recovery_fraction = 0.0;
  double vterm_variance = 0.0;
  double median_grad_supnorm = 0.0;
  double median_iterations = 0.0;
};

struct ExperimentResults {
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  std::vector<TrialFailure> failures;
  std::vector<AggregateRow> aggregates;
  double total_wall_time = 0.0;
};

struct RunOptions {
  unsigned workers = 1;
  bool keep_estimates = false;  // retain beta_hat per trial (memory heavy)
};

/// Seed of the dataset shared by all arms in (cell, trial).
inline std::uint64_t trial_seed(std::uint64_t master, const Cell& cell, std::size_t trial) {
  return derive_seed(master, {static_cast<std::uint64_t>(cell.p), static_cast<std::uint64_t>(cell.n),
                              static_cast<std::uint64_t>(trial)});
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

inline std::string describe(const Problem& prob) {
  std::ostringstream os;
  os << to_string(prob.loss().kind) << ':' << csv::fmt(prob.loss().xi) << '|' << to_string(prob.reg().kind) << ':'
     << csv::fmt(prob.reg().lambda) << ':' << csv::fmt(prob.reg().shape) << '|' << csv::fmt(prob.R()) << '|'
     << to_string(prob.weights().kind()) << ':' << csv::fmt(prob.weights().b()) << ':'
     << static_cast<int>(prob.weights().power()) << ':' << (prob.weights().B() ? 1 : 0);
  return os.str();
}

using ArmOutcome = std::variant<TrialResult, TrialFailure>;

inline std::vector<ArmOutcome> run_trial(const ExperimentConfig& cfg, const Cell& cell, std::size_t trial,
                                         bool keep_estimates) {
  using clock = std::chrono::steady_clock;
  const std::uint64_t seed = trial_seed(cfg.master_seed, cell, trial);
  std::vector<ArmOutcome> out;
  out.reserve(cfg.arms.size());
  auto fail = [&](const std::string& arm, const std::string& why) {
    out.emplace_back(TrialFailure{cell.p, cell.k, cell.n, cell.ratio, arm, seed, why});
  };

  Dataset data;
  try {
    data = gen_dataset(DataSpec{cell.n, cell.p, cell.k, cfg.covariates, cfg.errors, seed});
  } catch (const std::exception& e) {
    for (const auto& arm : cfg.arms) fail(arm.name, std::string("data generation: ") + e.what());
    return out;
  }
  auto X = std::make_shared<const Eigen::MatrixXd>(std::move(data.X));
  auto y = std::make_shared<const Eigen::VectorXd>(std::move(data.y));
  const Eigen::VectorXd& beta_star = data.beta_star;
  Support truth(static_cast<std::size_t>(cell.k));
  for (Eigen::Index j = 0; j < cell.k; ++j) truth[static_cast<std::size_t>(j)] = j;

  // Convex zero-initialized fits are shared between arms and two-step inits.
  std::map<std::string, SolverResult> zero_fits;
  auto solve_from_zero = [&](const Problem& prob, const SolverOptions& opts) -> const SolverResult& {
    const std::string key = describe(prob) + "|" + csv::fmt(opts.tol) + ":" + std::to_string(opts.max_iters) + ":" +
                            (opts.eta ? csv::fmt(*opts.eta) : std::string("auto")) + ":" + csv::fmt(opts.eta0);
    auto it = zero_fits.find(key);
    if (it == zero_fits.end())
      it = zero_fits.emplace(key, composite_gd(prob, Eigen::VectorXd::Zero(prob.p()), opts)).first;
    return it->second;
  };

  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    const Arm& arm = cfg.arms[a];
    const auto start = clock::now();
    try {
      const double R = arm.R ? *arm.R : arm.R_mult * beta_star.lpNorm<1>();
      const Problem prob(X, y, arm.loss, arm.weights.scheme(), arm.penalty.spec(cell.p, cell.n), R);
      const SolverOptions opts = arm.solver.options();

      Eigen::VectorXd beta_hat;
      std::size_t iterations = 0;
      switch (arm.init.kind) {
        case InitKind::Zero: {
          const SolverResult& r = solve_from_zero(prob, opts);
          beta_hat = r.beta;
          iterations = r.trace.iterations;
          break;
        }
        case InitKind::TwoStep: {
          const PenaltyRule step1_rule =
              arm.init.step1_penalty.value_or(PenaltyRule{PenaltyKind::L1, 0.0, arm.penalty.lambda, arm.penalty.lambda_mult});
          const Problem step1 = prob.with(arm.init.step1_loss, step1_rule.spec(cell.p, cell.n));
          const SolverResult& r1 = solve_from_zero(step1, opts);
          const SolverResult r2 = composite_gd(prob, r1.beta, opts);
          beta_hat = r2.beta;
          iterations = r1.trace.iterations + r2.trace.iterations;
          break;
        }
        case InitKind::Random:
        case InitKind::Perturbed: {
          Rng rng(seed, 0x1000 + a);
          Eigen::VectorXd z(cell.p);
          for (Eigen::Index j = 0; j < cell.p; ++j) z[j] = arm.init.sd * rng.normal();
          if (arm.init.kind == InitKind::Perturbed) z += beta_star;
          const Eigen::VectorXd beta0 = prox_l1_constrained(z, 0.0, R);
          const SolverResult r = composite_gd(prob, beta0, opts);
          beta_hat = r.beta;
          iterations = r.trace.iterations;
          break;
        }
      }

      TrialResult tr;
      tr.p = cell.p;
      tr.k = cell.k;
      tr.n = cell.n;
      tr.ratio = cell.ratio;
      tr.arm = arm.name;
      tr.seed = seed;
      const Eigen::VectorXd err = beta_hat - beta_star;
      tr.l2_error = err.norm();
      tr.l1_error = err.lpNorm<1>();
      tr.support_recovered = support_recovered(beta_hat, truth);
      tr.grad_supnorm = grad_supnorm_at_truth(prob, beta_star);
      tr.iterations = iterations;
      tr.vterm = std::sqrt(static_cast<double>(cell.n)) * err[0];
      tr.stationarity = stationarity_residual(prob, beta_hat);
      if (arm.oracle) {
        const OracleResult orc = solve_oracle(prob, truth, beta_star, arm.oracle_radius);
        tr.oracle_error = (beta_hat - orc.beta_oracle).norm();
      }
      if (!std::isfinite(tr.l2_error) || !std::isfinite(tr.grad_supnorm))
        throw SolverError("non-finite diagnostics", iterations);
      tr.wall_time = std::chrono::duration<double>(clock::now() - start).count();
      if (keep_estimates) tr.beta_hat = std::move(beta_hat);
      out.emplace_back(std::move(tr));
    } catch (const std::exception& e) {
      fail(arm.name, e.what());
    }
  }
  return out;
}

}  // namespace detail

inline std::vector<AggregateRow> aggregate(const ExperimentConfig& cfg, const std::vector<TrialResult>& trials,
                                           const std::vector<TrialFailure>& failures) {
  std::vector<AggregateRow> rows;
  for (const auto& cell : cfg.cells()) {
    for (const auto& arm : cfg.arms) {
      AggregateRow row{cell.p, cell.k, cell.n, cell.ratio, arm.name};
      std::vector<double> l2, l1, gs, it, vt;
      std::size_t recovered = 0;
      for (const auto& t : trials) {
        if (t.p != cell.p || t.n != cell.n || t.arm != arm.name) continue;
        l2.push_back(t.l2_error);
        l1.push_back(t.l1_error);
        gs.push_back(t.grad_supnorm);
        it.push_back(static_cast<double>(t.iterations));
        vt.push_back(t.vterm);
        if (t.support_recovered) ++recovered;
      }
      for (const auto& f : failures)
        if (f.p == cell.p && f.n == cell.n && f.arm == arm.name) ++row.failures;
      row.trials = l2.size();
      if (!l2.empty()) {
        row.median_l2_error = detail::median(l2);
        double s = 0.0;
        for (double v : l2) s += v;
        row.mean_l2_error = s / static_cast<double>(l2.size());
        row.median_l1_error = detail::median(l1);
        row.recovery_fraction = static_cast<double>(recovered) / static_cast<double>(l2.size());
        row.median_grad_supnorm = detail::median(gs);
        row.median_iterations = detail::median(it);
      }
      if (vt.size() >= 2) {
        double mean = 0.0;
        for (double v : vt) mean += v;
        mean /= static_cast<double>(vt.size());
        double ss = 0.0;
        for (double v : vt) ss += (v - mean) * (v - mean);
        row.vterm_variance = ss / static_cast<double>(vt.size() - 1);
      } else {
        row.vterm_variance = std::nan("");
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Runs every (cell, trial) task on a worker pool and gathers rows in
/// (cell, arm, trial) order, independent of completion order.
inline ExperimentResults run_experiment(const ExperimentConfig& cfg, RunOptions run = {}) {
  const auto started = std::chrono::steady_clock::now();
  const std::vector<Cell> cells = cfg.cells();
  const std::size_t tasks = cells.size() * cfg.trials;
  std::vector<std::vector<detail::ArmOutcome>> slots(tasks);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const Cell& cell = cells[t / cfg.trials];
      try {
        slots[t] = detail::run_trial(cfg, cell, t % cfg.trials, run.keep_estimates);
      } catch (const std::exception& e) {
        // run_trial records per-arm failures itself; this only catches allocation-level errors.
        for (const auto& arm : cfg.arms)
          slots[t].emplace_back(TrialFailure{cell.p, cell.k, cell.n, cell.ratio, arm.name,
                                             trial_seed(cfg.master_seed, cell, t % cfg.trials), e.what()});
      }
    }
  };
  const unsigned nworkers = std::max(1u, std::min<unsigned>(run.workers, static_cast<unsigned>(std::max<std::size_t>(tasks, 1))));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < nworkers; ++w) pool.emplace_back(worker);
  }

  ExperimentResults res;
  res.config = cfg;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        auto& o = slots[c * cfg.trials + t][a];
        if (auto* tr = std::get_if<TrialResult>(&o)) res.trials.push_back(std::move(*tr));
        else res.failures.push_back(std::get<TrialFailure>(std::move(o)));
      }
    }
  }
  res.aggregates = aggregate(cfg, res.trials, res.failures);
  res.total_wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

// ---------------------------------------------------------------------------
// Reporting.

inline constexpr const char* kTrialColumns =
    "p,k,n,ratio,arm,seed,l2_error,l1_error,support_recovered,grad_supnorm,iterations,wall_time,vterm";

inline constexpr const char* kAggregateColumns =
    "p,k,n,ratio,arm,trials,failures,median_l2_error,mean_l2_error,median_l1_error,recovery_fraction,"
    "vterm_variance,median_grad_supnorm,median_iterations";

struct ReportOptions {
  /// Write measured wall times into trials.csv. Off by default: timings
  /// vary run to run, so they go to timings.csv and trials.csv stays
  /// byte-identical under a fixed master seed.
  bool wall_time_in_trials = false;
};

inline std::string trials_csv(const ExperimentResults& res, const ReportOptions& opts = {}) {
  std::ostringstream os;
  os << kTrialColumns << '\n';
  for (const auto& t : res.trials) {
    os << t.p << ',' << t.k << ',' << t.n << ',' << csv::fmt(t.ratio, 12) << ',' << t.arm << ',' << t.seed << ','
       << csv::fmt(t.l2_error, 12) << ',' << csv::fmt(t.l1_error, 12) << ',' << (t.support_recovered ? 1 : 0) << ','
       << csv::fmt(t.grad_supnorm, 12) << ',' << t.iterations << ','
       << csv::fmt(opts.wall_time_in_trials ? t.wall_time : 0.0, 6) << ',' << csv::fmt(t.vterm, 12) << '\n';
  }
  return os.str();
}

inline std::string aggregates_csv(const ExperimentResults& res) {
  std::ostringstream os;
  os << kAggregateColumns << '\n';
  for (const auto& a : res.aggregates) {
    os << a.p << ',' << a.k << ',' << a.n << ',' << csv::fmt(a.ratio, 12) << ',' << a.arm << ',' << a.trials << ','
       << a.failures << ',' << csv::fmt(a.median_l2_error, 12) << ',' << csv::fmt(a.mean_l2_error, 12) << ','
       << csv::fmt(a.median_l1_error, 12) << ',' << csv::fmt(a.recovery_fraction, 12) << ','
       << csv::fmt(a.vterm_variance, 12) << ',' << csv::fmt(a.median_grad_supnorm, 12) << ','
       << csv::fmt(a.median_iterations, 12) << '\n';
  }
  return os.str();
}

/// 64-bit FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline json manifest(const ExperimentResults& res) {
  const auto& cfg = res.config;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.source.dump())));
  json arms = json::array();
  for (const auto& a : cfg.arms) {
    json init = {{"kind", a.init.kind == InitKind::Zero       ? "zero"
                          : a.init.kind == InitKind::TwoStep ? "two_step"
                          : a.init.kind == InitKind::Random  ? "random"
                                                             : "perturbed"}};
    if (a.init.kind == InitKind::TwoStep) init["step1_loss"] = {{"kind", to_string(a.init.step1_loss.kind)}, {"xi", a.init.step1_loss.xi}};
    if (a.init.kind == InitKind::Random || a.init.kind == InitKind::Perturbed) init["sd"] = a.init.sd;
    arms.push_back({{"name", a.name},
                    {"loss", {{"kind", to_string(a.loss.kind)}, {"xi", a.loss.xi}}},
                    {"weights", {{"kind", to_string(a.weights.kind)}, {"b", a.weights.b}}},
                    {"penalty", {{"kind", to_string(a.penalty.kind)}, {"shape", a.penalty.shape}}},
                    {"R_rule", a.R ? json(*a.R) : json("R_mult*||beta*||_1")},
                    {"R_mult", a.R_mult},
                    {"init", init},
                    {"solver",
                     {{"eta", a.solver.eta ? json(*a.solver.eta) : json("auto")},
                      {"eta0", a.solver.eta0},
                      {"tol", a.solver.tol},
                      {"max_iters", a.solver.max_iters}}},
                    {"oracle", a.oracle},
                    {"oracle_radius", a.oracle_radius}});
  }
  json cells = json::array();
  for (const auto& c : cfg.cells()) cells.push_back({{"p", c.p}, {"k", c.k}, {"n", c.n}, {"ratio", c.ratio}});
  return {{"name", cfg.name},
          {"version", kVersion},
          {"config_hash_fnv1a64", hash},
          {"config", cfg.source},
          {"master_seed", cfg.master_seed},
          {"seed_rule", "dataset seed = derive_seed(master_seed, {p, n, trial}); Philox4x32-10 keyed by the seed, "
                        "stream 1 = covariates, stream 2 = errors, stream 0x1000+arm = random inits"},
          {"sparsity_rule", cfg.k_fixed ? "fixed" : "k = round(sqrt(p))"},
          {"n_rule", cfg.ratios.empty() ? "explicit" : "n = round(ratio * k * log p)"},
          {"trials_per_cell", cfg.trials},
          {"resolved_arms", arms},
          {"cells", cells},
          {"trial_rows", res.trials.size()},
          {"failures", res.failures.size()},
          {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
          {"total_wall_time_seconds", res.total_wall_time}};
}

/// Writes trials.csv, aggregates.csv, manifest.json, diagnostics.jsonl,
/// timings.csv and (if any) failures.csv into dir.
inline void emit_report(const ExperimentResults& res, const std::filesystem::path& dir, const ReportOptions& opts = {}) {
  if (res.trials.empty() && res.failures.empty()) throw InvalidSpec("emit_report: no results to write");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw InvalidSpec("emit_report: cannot write '" + (dir / name).string() + "'");
    return f;
  };
  open("trials.csv") << trials_csv(res, opts);
  open("aggregates.csv") << aggregates_csv(res);
  open("manifest.json") << manifest(res).dump(2) << '\n';
  {
    auto f = open("diagnostics.jsonl");
    for (const auto& t : res.trials) {
      json rec = {{"seed", t.seed},
                  {"n", t.n},
                  {"p", t.p},
                  {"k", t.k},
                  {"arm", t.arm},
                  {"l2_error", t.l2_error},
                  {"l1_error", t.l1_error},
                  {"support_recovered", t.support_recovered},
                  {"grad_supnorm", t.grad_supnorm},
                  {"oracle_error", t.oracle_error ? json(*t.oracle_error) : json(nullptr)},
                  {"variance_terms", t.vterm},
                  {"stationarity_residual", t.stationarity}};
      f << rec.dump() << '\n';
    }
  }
  {
    auto f = open("timings.csv");
    f << "p,n,arm,seed,wall_time\n";
    for (const auto& t : res.trials) f << t.p << ',' << t.n << ',' << t.arm << ',' << t.seed << ',' << csv::fmt(t.wall_time, 6) << '\n';
  }
  if (!res.failures.empty()) {
    auto f = open("failures.csv");
    f << "p,k,n,ratio,arm,seed,reason\n";
    for (const auto& x : res.failures) {
      std::string reason = x.reason;
      std::replace(reason.begin(), reason.end(), '"', '\'');
      f << x.p << ',' << x.k << ',' << x.n << ',' << csv::fmt(x.ratio, 12) << ',' << x.arm << ',' << x.seed << ",\""
        << reason << "\"\n";
    }
  }
}

}  // namespace robreg::experiments
