// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "robustdyn/bridge.hpp"
#include "robustdyn/ddc.hpp"
#include "robustdyn/eot.hpp"
#include "robustdyn/kde.hpp"
#include "robustdyn/measures.hpp"
#include "robustdyn/problems.hpp"
#include "robustdyn/sensitivity.hpp"
#include "robustdyn/synth.hpp"

using namespace robustdyn;

namespace {

int failures = 0;

void report(int id, bool pass, const char* name, const std::string& detail = "") {
  std::printf("criterion %2d: %s  %s%s%s\n", id, pass ? "PASS" : "FAIL", name,
              detail.empty() ? "" : "  -- ", detail.c_str());
  if (!pass) ++failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Grid g2({0.0, 1.0});

// ---------------------------------------------------------------------------
void criterion_1_sinkhorn_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> um(0.1, 0.9);
  double worst_value = 0.0, worst_marginal = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const double p = um(gen), q = um(gen);
    const std::array<double, 4> c{uc(gen), uc(gen), uc(gen), uc(gen)};
    const double lambda = rep % 3 == 0 ? 0.1 : (rep % 3 == 1 ? 1.0 : 10.0);
    DiscreteMeasure m1(g2, {p, 1.0 - p}), m2(g2, {q, 1.0 - q});
    SinkhornOptions opts;
    opts.tol = 1e-10;
    opts.max_iter = 2000000;
    const EotSolution sol =
        sinkhorn(CostTensor({g2, g2}, {c[0], c[1], c[2], c[3]}), {m1, m2}, lambda, opts);
    const std::array<double, 4> ref{p * q, p * (1.0 - q), (1.0 - p) * q,
                                    (1.0 - p) * (1.0 - q)};
    const double oracle = oracles::eot2x2_value(p, q, c, ref, lambda);
    worst_value = std::max(worst_value, std::abs(sol.value - oracle));
    const DiscreteMeasure got1 = marginal(sol.plan, 0);
    const DiscreteMeasure got2 = marginal(sol.plan, 1);
    worst_marginal = std::max({worst_marginal, std::abs(got1.weights[0] - p),
                               std::abs(got2.weights[0] - q)});
  }
  const double secs = elapsed_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max |value-oracle| %.2e (tol 1e-6), max marginal %.2e "
                                  "(tol 1e-8), %.1fs (limit 10s)",
                worst_value, worst_marginal, secs);
  report(1, worst_value < 1e-6 && worst_marginal < 1e-8 && secs < 10.0,
         "sinkhorn oracle equivalence on 200 random 2x2 instances", buf);
}

// ---------------------------------------------------------------------------
void criterion_2_primal_dual_gap() {
  std::mt19937_64 gen(102);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> uw(0.1, 1.0);
  const Grid g5({0.0, 0.25, 0.5, 0.75, 1.0});
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> c(25);
    for (double& x : c) x = uc(gen);
    std::vector<double> w1(5), w2(5);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 5; ++i) {
      w1[i] = uw(gen);
      w2[i] = uw(gen);
      s1 += w1[i];
      s2 += w2[i];
    }
    for (int i = 0; i < 5; ++i) {
      w1[i] /= s1;
      w2[i] /= s2;
    }
    DiscreteMeasure m1(g5, w1), m2(g5, w2);
    const double lambda = rep % 3 == 0 ? 0.3 : (rep % 3 == 1 ? 1.0 : 3.0);
    SinkhornOptions opts;
    opts.tol = 1e-11;
    opts.max_iter = 2000000;
    const EotSolution sol = sinkhorn(CostTensor({g5, g5}, c), {m1, m2}, lambda, opts);
    const Coupling f0 = product_coupling({m1, m2});
    const double primal =
        expected_cost(sol.plan, CostTensor({g5, g5}, c)) + lambda * kl_divergence(sol.plan, f0);
    worst = std::max(worst, std::abs(primal - sol.value));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max gap %.2e (tol 1e-6)", worst);
  report(2, worst < 1e-6, "primal-dual consistency on 50 random 5x5 instances", buf);
}

// ---------------------------------------------------------------------------
void criterion_3_reference_absorption() {
  std::mt19937_64 gen(103);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> uw(0.05, 1.0);
  const Grid g3({0.0, 0.5, 1.0});
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> f0t(9);
    double mass = 0.0;
    for (double& x : f0t) {
      x = uw(gen);
      mass += x;
    }
    for (double& x : f0t) x /= mass;
    const Coupling f0({g3, g3}, f0t);
    const DiscreteMeasure m1 = marginal(f0, 0);
    const DiscreteMeasure m2 = marginal(f0, 1);
    std::vector<double> c(9);
    for (double& x : c) x = uc(gen);
    const double lambda = 0.4 + 0.4 * (rep % 3);
    SinkhornOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = 2000000;
    const CostTensor cost({g3, g3}, c);
    const EotSolution direct = sinkhorn(cost, {m1, m2}, lambda, opts, &f0);
    const EotSolution absorbed =
        sinkhorn(absorb_reference(cost, f0, lambda), {m1, m2}, lambda, opts);
    worst = std::max(worst, std::abs(direct.value - absorbed.value));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max |direct-absorbed| %.2e (tol 1e-8)", worst);
  report(3, worst < 1e-8, "reference absorption identity on 20 random instances", buf);
}

// ---------------------------------------------------------------------------
void criterion_4_bridge_decomposition() {
  std::mt19937_64 gen(104);
  std::uniform_real_distribution<double> u(0.15, 0.85);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  double worst_value = 0.0, worst_ci = 0.0, worst_terminal = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    const double p = u(gen);
    std::vector<Matrix> ks;
    for (int t = 0; t < 2; ++t) {
      Matrix K(2, 2);
      const double a = u(gen), b = u(gen);
      K(0, 0) = a;
      K(0, 1) = 1.0 - a;
      K(1, 0) = b;
      K(1, 1) = 1.0 - b;
      ks.push_back(std::move(K));
    }
    const PathLaw law(g2, DiscreteMeasure(g2, {p, 1.0 - p}), std::move(ks));
    PairwiseCost cost;
    for (int t = 0; t < 2; ++t) {
      Matrix m(2, 2);
      for (double& x : m.a) x = uc(gen);
      cost.steps.push_back(std::move(m));
    }
    const double lambda = 0.4 + 0.3 * (rep % 3);
    const EndpointMeasure r = auxiliary_endpoint(law, cost, lambda);
    const EotSolution sol = static_bridge(r, law.initial, law.terminal, lambda, 1e-13);

    const auto f0_tensor = enumerate_path_tensor(law);
    const double a1 = law.initial.weights[0];
    const double b1 = law.terminal.weights[0];
    auto objective = [&](const std::vector<double>& x) {
      double f[8];
      f[0] = x[0];
      f[1] = x[1];
      f[2] = x[2];
      f[3] = a1 - x[0] - x[1] - x[2];
      f[4] = x[3];
      f[5] = x[4];
      const double s = b1 - x[0] - x[2];
      f[6] = s - x[3];
      f[7] = 1.0 - a1 - s - x[4];
      double val = 0.0;
      for (int i = 0; i < 8; ++i) {
        if (f[i] < 0.0) return std::numeric_limits<double>::infinity();
        const int i1 = i >> 2, i2 = (i >> 1) & 1, i3 = i & 1;
        val += f[i] * (cost.steps[0](i1, i2) + cost.steps[1](i2, i3));
        if (f[i] > 0.0) {
          if (f0_tensor[i] <= 0.0) return std::numeric_limits<double>::infinity();
          val += lambda * f[i] * std::log(f[i] / f0_tensor[i]);
        }
      }
      return val;
    };
    // multiresolution grid search down to step 1e-3, then two refinements
    const double brute = oracles::grid_minimize(objective, std::vector<double>(5, 0.0),
                                                std::vector<double>(5, 1.0), 8, 14);
    worst_value = std::max(worst_value, std::abs(sol.value - brute));

    const PathLaw worst = reconstruct_path_law(law, cost, sol.potentials, lambda);
    const auto w_tensor = enumerate_path_tensor(worst);
    for (int j = 0; j < 2; ++j) {
      double cond[2] = {0.0, 0.0};
      bool ok[2] = {false, false};
      for (int i = 0; i < 2; ++i) {
        const double p1 = w_tensor[i * 4 + j * 2];
        const double p2 = w_tensor[i * 4 + j * 2 + 1];
        if (p1 + p2 > 1e-13) {
          cond[i] = p2 / (p1 + p2);
          ok[i] = true;
        }
      }
      if (ok[0] && ok[1]) worst_ci = std::max(worst_ci, std::abs(cond[0] - cond[1]));
    }
    worst_terminal = std::max(
        worst_terminal, std::abs(worst.terminal.weights[0] - law.terminal.weights[0]));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max |bridge-brute| %.2e (tol 1e-4), markov residual %.2e (tol 1e-8), "
                "terminal %.2e (tol 1e-8)",
                worst_value, worst_ci, worst_terminal);
  report(4, worst_value < 1e-4 && worst_ci < 1e-8 && worst_terminal < 1e-8,
         "bridge decomposition vs brute force on 30 random T=3 instances", buf);
}

// ---------------------------------------------------------------------------
void criterion_5_lemma2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(105);
  std::uniform_real_distribution<double> ug(-0.3, 0.3);
  std::uniform_real_distribution<double> ur(0.3, 0.9);
  std::uniform_real_distribution<double> us(0.2, 0.6);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const MarkovChain chain = discretize_ar1(ug(gen), ur(gen), us(gen), 51, 3.0);
    InfiniteHorizonModel model;
    model.beta = 0.975;
    model.chain = chain;
    const SharePolicy pol = solve_share_fixed_point(model, chain, 1e-13);
    const std::vector<double> v = solve_value_iteration(0.975, chain, 1e-14);
    for (std::size_t i = 0; i < 51; ++i)
      worst = std::max(worst,
                       std::abs(1.0 - pol.s0[i] - std::exp(chain.grid[i] - v[i])));
  }
  const double secs = elapsed_s(t0);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max identity error %.2e (tol 1e-8), %.1fs (limit 5s)",
                worst, secs);
  report(5, worst < 1e-8 && secs < 5.0,
         "lemma-2 share/value equivalence on 10 random 51-node models", buf);
}

// ---------------------------------------------------------------------------
void criterion_6_finite_horizon_bellman() {
  SynthTaxiSpec spec;
  spec.first_hour = 6;
  spec.last_hour = 16;  // 11 hourly layers
  spec.n_xi = 99;
  spec.n_w = 4;
  spec.days = 4;
  spec.rho = 0.6;
  spec.sigma = 0.3;
  spec.seed = 106;
  const TaxiPanel panel = gen_taxi_panel(spec);
  const double resid =
      ccp_constraint_residual(panel.true_ccps, panel.model, panel.model.xi_chain);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max bellman residual %.2e (tol 1e-10)", resid);
  report(6, resid <= 1e-10,
         "finite-horizon bellman residual, T=11 hours, 99 xi nodes, 4 w bins", buf);
}

// ---------------------------------------------------------------------------
struct CarFixture {
  SynthCarSpec spec;
  CarPanel panel;
  CarReference ref;
  InfiniteHorizonModel model;
  double true_elasticity = 0.0;
};

CarFixture make_car_fixture(std::size_t n_grid, std::size_t periods, std::uint64_t seed) {
  CarFixture fx;
  fx.spec.periods = periods;
  fx.spec.gamma0 = 0.1;
  fx.spec.gamma1 = 0.6;
  fx.spec.sigma = 0.35;
  fx.spec.n_grid = n_grid;
  fx.spec.offset = -0.25;
  fx.spec.seed = seed;
  fx.panel = gen_car_panel(fx.spec);
  fx.ref = fit_reference_car(fx.panel.observed_s0, fx.spec.beta, n_grid);
  fx.model = car_model_from_panel(fx.spec, fx.panel, fx.ref.chain);
  InfiniteHorizonModel truth_model = car_model_from_panel(fx.spec, fx.panel, fx.panel.true_chain);
  fx.true_elasticity =
      industry_elasticity(fx.panel.true_policy, truth_model, periods / 2);
  return fx;
}

void criterion_7_delta0_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  CarFixture fx = make_car_fixture(51, 120, 107);
  CarProblemOptions opts;
  opts.t1 = fx.spec.periods / 2;
  CarProblem prob(fx.model, fx.ref, opts);
  SensitivityConfig cfg;
  cfg.radii = {0.0};
  cfg.mcmc_steps = 10;
  cfg.opt_steps = 1;
  cfg.fixed_point_eps = fx.ref.fixed_point_eps;
  const BoundCurve lo = anneal_optimize(prob, cfg, Direction::Lower);
  const BoundCurve hi = anneal_optimize(prob, cfg, Direction::Upper);
  const double gap = std::abs(lo.records[0].lower - hi.records[0].upper);
  const double rel =
      std::abs(lo.records[0].lower - fx.true_elasticity) / std::abs(fx.true_elasticity);
  const double secs = elapsed_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "|lower-upper| %.2e (tol 1e-6), rel error vs truth %.3e (tol 5e-3), "
                "%.0fs (limit 120s)",
                gap, rel, secs);
  report(7, gap < 1e-6 && rel < 5e-3 && secs < 120.0,
         "delta = 0 exactness of the full car pipeline", buf);
}

// ---------------------------------------------------------------------------
void criterion_8_monotone_nesting() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {11ull, 23ull, 37ull}) {
    CarFixture fx = make_car_fixture(21, 60, 200 + seed);
    CarProblemOptions opts;
    opts.t1 = 30;
    opts.kde_rule = BandwidthRule::Scott;
    CarProblem prob(fx.model, fx.ref, opts);
    SensitivityConfig cfg;
    cfg.radii = default_radii();
    cfg.mcmc_steps = 80;
    cfg.opt_steps = 2;
    cfg.fixed_point_eps = fx.ref.fixed_point_eps;
    cfg.seed = seed;
    const BoundCurve lo = anneal_optimize(prob, cfg, Direction::Lower);
    const BoundCurve hi = anneal_optimize(prob, cfg, Direction::Upper);
    const double slack = 1e-3 * std::abs(lo.reference);
    for (std::size_t i = 1; i < cfg.radii.size(); ++i) {
      if (!lo.records[i].has_lower || !hi.records[i].has_upper) {
        pass = false;
        detail = "missing record";
        continue;
      }
      if (lo.records[i].lower > lo.records[i - 1].lower + slack) {
        pass = false;
        detail = "lower curve not nonincreasing";
      }
      if (hi.records[i].upper < hi.records[i - 1].upper - slack) {
        pass = false;
        detail = "upper curve not nondecreasing";
      }
    }
    // once the curve flattens, the KL constraint stops binding
    const std::size_t n = cfg.radii.size();
    const bool flat_lower =
        std::abs(lo.records[n - 1].lower - lo.records[n - 2].lower) <=
        1e-3 * std::abs(lo.reference);
    const bool flat_upper =
        std::abs(hi.records[n - 1].upper - hi.records[n - 2].upper) <=
        1e-3 * std::abs(hi.reference);
    if (flat_lower && lo.records[n - 1].binding_lower) {
      pass = false;
      detail = "binding flag still on after flattening (lower)";
    }
    if (flat_upper && hi.records[n - 1].binding_upper) {
      pass = false;
      detail = "binding flag still on after flattening (upper)";
    }
    if (!flat_lower || !flat_upper) {
      pass = false;
      detail = "curve did not flatten on the default ladder";
    }
  }
  report(8, pass, "monotone nesting over the default 14-radius ladder, 3 seeds", detail);
}

// ---------------------------------------------------------------------------
void criterion_9_theorem5_bound() {
  std::mt19937_64 gen(109);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  DiscreteMeasure u(g2, {0.5, 0.5});
  bool pass = true;
  double worst_violation = -1e9;
  for (int rep = 0; rep < 20; ++rep) {
    const std::array<double, 4> c{uc(gen), uc(gen), uc(gen), uc(gen)};
    const double c_exact = oracles::ot2x2_value(0.5, 0.5, c);
    double lip = 0.0;
    const double pts[2] = {0.0, 1.0};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        const double dist =
            std::abs(pts[a / 2] - pts[b / 2]) + std::abs(pts[a % 2] - pts[b % 2]);
        lip = std::max(lip, std::abs(c[a] - c[b]) / dist);
      }
    GlobalBoundParams gb;
    gb.lipschitz = lip;
    gb.scale = 1.0;
    gb.p = 1;
    gb.dims = {1};
    for (double lambda : {0.5, 0.1}) {
      SinkhornOptions opts;
      opts.tol = 1e-10;
      opts.max_iter = 2000000;
      const EotSolution sol =
          sinkhorn(CostTensor({g2, g2}, {c[0], c[1], c[2], c[3]}), {u, u}, lambda, opts);
      const double gap = sol.value - c_exact;
      const double bound = global_bound(gb, lambda);
      if (gap < -1e-9 || gap > bound + 1e-9) pass = false;
      worst_violation = std::max(worst_violation, gap - bound);
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max (gap - bound) %.2e (must be <= 0)", worst_violation);
  report(9, pass, "theorem-5 entropic error bound on 20 random 2x2 instances", buf);
}

// ---------------------------------------------------------------------------
void criterion_10_robustness_round_trip() {
  CarFixture fx = make_car_fixture(21, 60, 110);
  CarProblemOptions opts;
  opts.t1 = 30;
  opts.kde_rule = BandwidthRule::Scott;
  CarProblem prob(fx.model, fx.ref, opts);
  SensitivityConfig cfg;
  cfg.mcmc_steps = 250;
  cfg.opt_steps = 2;
  cfg.fixed_point_eps = fx.ref.fixed_point_eps;
  cfg.seed = 5;

  const double reference = prob.reference_scalar();

  // a coarse bound ladder seeds the metric chain (the curve-reading route)
  SensitivityConfig ladder_cfg = cfg;
  ladder_cfg.radii = {0.001, 0.01, 0.1, 1.0};
  ladder_cfg.mcmc_steps = 150;
  const BoundCurve ladder = anneal_optimize(prob, ladder_cfg, Direction::Lower);

  bool pass = true;
  std::string detail;
  for (double frac : {0.01, 0.03, 0.06}) {
    const double s_bar = reference - frac * std::abs(reference);
    const AnnealState* warm = nullptr;
    AnnealState warm_state;
    for (const BoundRecord& r : ladder.records) {
      if (r.has_lower && r.lower <= s_bar && !r.state_lower.duals.empty()) {
        warm_state = prob.bound_to_robustness(r.state_lower);
        warm = &warm_state;
        break;
      }
    }
    const RobustnessResult res = robustness_metric(prob, s_bar, Direction::Lower, cfg, warm);
    if (!res.feasible) {
      pass = false;
      detail = "robustness metric infeasible";
      continue;
    }
    SensitivityConfig back = cfg;
    back.radii = {std::max(res.delta, 1e-12)};
    const BoundCurve lo =
        anneal_optimize(prob, back, Direction::Lower, &res.witness);
    if (!lo.records[0].has_lower ||
        lo.records[0].lower > s_bar + 1e-3 * std::abs(reference)) {
      pass = false;
      detail = "fed-back radius did not reach the threshold";
    }
  }
  report(10, pass, "robustness-metric round trip on 3 thresholds", detail);
}

// ---------------------------------------------------------------------------
void criterion_11_eccp_recovery() {
  // noiseless: exact identification
  SynthTaxiSpec clean;
  clean.first_hour = 8;
  clean.last_hour = 13;
  clean.n_xi = 15;
  clean.days = 30;
  clean.sigma = 0.0;
  clean.mu = 0.0;
  clean.seed = 3;
  const TaxiPanel noiseless = gen_taxi_panel(clean);
  const EccpFit exact = eccp_first_stage(noiseless.eccp);
  double worst_exact = 0.0;
  for (int a = 0; a < 4; ++a)
    worst_exact = std::max(worst_exact, std::abs(exact.theta[a] - clean.theta[a]));

  // noisy panels: each component within 3 estimated standard errors
  int bad_components = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthTaxiSpec noisy;
    noisy.first_hour = 8;
    noisy.last_hour = 16;  // 9 layers
    noisy.n_xi = 25;
    noisy.days = 1150;     // ~1e4 day-hours
    noisy.rho = 0.5;
    noisy.sigma = 0.25;
    noisy.mu = 0.0;
    noisy.population_eccp = false;  // realized next-period term: honest expectational error
    noisy.drivers_per_cohort = 0;   // exact cell CCPs (the latent paths carry the noise)
    noisy.seed = 1000 + seed;
    const TaxiPanel panel = gen_taxi_panel(noisy);
    const EccpFit fit = eccp_first_stage(panel.eccp);
    for (int a = 0; a < 4; ++a)
      if (std::abs(fit.theta[a] - noisy.theta[a]) > 3.0 * fit.se[a]) ++bad_components;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "noiseless max error %.2e (tol 1e-6); noisy: %d/80 outside 3 SEs "
                "(require 0)",
                worst_exact, bad_components);
  report(11, worst_exact < 1e-6 && bad_components == 0, "eccp first-stage recovery", buf);
}

// ---------------------------------------------------------------------------
void criterion_12_stationary_perturbation() {
  std::mt19937_64 gen(112);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> ur(0.2, 0.8);
  std::uniform_real_distribution<double> ud(0.01, 0.5);
  double worst_marginal = 0.0, worst_kl = -1e9;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5 + (rep % 3) * 2;
    const MarkovChain chain = discretize_ar1(uc(gen) * 0.2, ur(gen), 0.3 + 0.3 * ur(gen),
                                             n, 3.0);
    const Coupling f0 = joint_from_chain(chain);
    std::vector<double> c(n * n);
    for (double& x : c) x = uc(gen);
    const double delta1 = ud(gen);
    const StationaryPerturbedResult res = stationary_perturbed_eot(
        CostTensor({chain.grid, chain.grid}, c), chain.stationary, f0, 1.0, delta1, 1e-10);
    const DiscreteMeasure m0 = marginal(res.plan, 0);
    const DiscreteMeasure m1 = marginal(res.plan, 1);
    for (std::size_t i = 0; i < n; ++i)
      worst_marginal = std::max(worst_marginal, std::abs(m0.weights[i] - m1.weights[i]));
    worst_kl = std::max(worst_kl, kl_divergence(res.nu_star, chain.stationary) - delta1);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "max marginal mismatch %.2e (tol 1e-6); max KL excess %.2e (tol 1e-6)",
                worst_marginal, worst_kl);
  report(12, worst_marginal < 1e-6 && worst_kl < 1e-6,
         "theorem-2 stationarity on 20 random instances", buf);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::pair<int, void (*)()> criteria[] = {
      {1, criterion_1_sinkhorn_oracle},      {2, criterion_2_primal_dual_gap},
      {3, criterion_3_reference_absorption}, {4, criterion_4_bridge_decomposition},
      {5, criterion_5_lemma2},               {6, criterion_6_finite_horizon_bellman},
      {7, criterion_7_delta0_exactness},     {8, criterion_8_monotone_nesting},
      {9, criterion_9_theorem5_bound},       {10, criterion_10_robustness_round_trip},
      {11, criterion_11_eccp_recovery},      {12, criterion_12_stationary_perturbation},
  };
  for (const auto& [id, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, "criterion aborted", e.what());
    }
    std::fflush(stdout);
  }
  std::printf("acceptance: %s (%d failures, %.0fs)\n", failures == 0 ? "PASS" : "FAIL",
              failures, elapsed_s(t0));
  return failures == 0 ? 0 : 1;
}
