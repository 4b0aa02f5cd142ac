#include "robustdyn/problems.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "robustdyn/kernels.hpp"

namespace robustdyn {

namespace {

std::vector<std::array<double, 2>> lag_pairs(const std::vector<double>& xs) {
  std::vector<std::array<double, 2>> pairs;
  for (std::size_t t = 0; t + 1 < xs.size(); ++t) pairs.push_back({xs[t], xs[t + 1]});
  return pairs;
}

double share_match_violation(const SharePolicy& policy,
                             const std::vector<double>& observed,
                             const RecoveredOmega& rec) {
  double acc = 0.0;
  for (std::size_t t = 0; t < observed.size(); ++t)
    acc += std::abs(policy.s0[rec.indices[t]] - observed[t]);
  return acc / static_cast<double>(observed.size());
}

// Share inversion by linear interpolation, used only inside the reference
// fit: the nearest-node inversion quantizes the recovered path and lets the
// fixed-point loop lock onto off-truth plateaus.
std::vector<double> interp_invert_shares(const SharePolicy& policy,
                                         const std::vector<double>& observed) {
  const std::size_t n = policy.s0.size();
  const bool decreasing = policy.s0.front() > policy.s0.back();
  std::vector<double> out;
  out.reserve(observed.size());
  for (double s : observed) {
    const double lo = std::min(policy.s0.front(), policy.s0.back());
    const double hi = std::max(policy.s0.front(), policy.s0.back());
    if (s >= hi) {
      out.push_back(decreasing ? policy.grid[0] : policy.grid[n - 1]);
      continue;
    }
    if (s <= lo) {
      out.push_back(decreasing ? policy.grid[n - 1] : policy.grid[0]);
      continue;
    }
    std::size_t a = 0, b = n - 1;
    while (b - a > 1) {
      const std::size_t mid = (a + b) / 2;
      const bool go_right = decreasing ? policy.s0[mid] > s : policy.s0[mid] < s;
      (go_right ? a : b) = mid;
    }
    const double frac = (s - policy.s0[a]) / (policy.s0[b] - policy.s0[a]);
    out.push_back(policy.grid[a] + frac * (policy.grid[b] - policy.grid[a]));
  }
  return out;
}

}  // namespace

CarReference fit_reference_car(const std::vector<double>& observed_s0, double beta,
                               std::size_t n_grid, double width, BandwidthRule rule,
                               double tol, int max_iter) {
  if (observed_s0.size() < 6)
    throw std::invalid_argument("fit_reference_car: need at least 6 periods");

  // Static-logit inversion seeds the AR(1) parameters; a ladder of seed
  // sigmas guards against fixed points on truncating grids. Candidates are
  // ranked by the share-matching residual, which vanishes exactly when the
  // fitted representation reproduces the data.
  std::vector<double> omega0;
  for (double s : observed_s0) omega0.push_back(std::log((1.0 - s) / s));
  Ar1Fit seed = refit_ar1(omega0);
  seed.slope = std::clamp(seed.slope, -0.99, 0.99);
  seed.sigma = std::max(seed.sigma, 1e-3);

  InfiniteHorizonModel model;
  model.beta = beta;

  CarReference ref;
  Ar1Fit best_fit;
  MarkovChain best_chain;
  SharePolicy best_policy;
  double best_vio = std::numeric_limits<double>::infinity();
  int total_iters = 0;

  for (double mult : {3.0, 1.0, 6.0, 12.0, 0.5}) {
    Ar1Fit fit = seed;
    fit.sigma = seed.sigma * mult;
    std::vector<std::size_t> prev_indices;
    try {
    for (int it = 0; it < max_iter; ++it) {
      ref.chain = discretize_ar1(fit.intercept, fit.slope, fit.sigma, n_grid, width);
      model.chain = ref.chain;
      ref.policy = solve_share_fixed_point(model, ref.chain);
      const Ar1Fit next = refit_ar1(interp_invert_shares(ref.policy, observed_s0));
      ++total_iters;
      const double change = std::abs(next.intercept - fit.intercept) +
                            std::abs(next.slope - fit.slope) +
                            std::abs(next.sigma - fit.sigma);
      // damped parameter update
      fit.intercept = 0.5 * (fit.intercept + next.intercept);
      fit.slope = std::clamp(0.5 * (fit.slope + next.slope), -0.99, 0.99);
      fit.sigma = std::max(0.5 * (fit.sigma + next.sigma), 1e-8);
      if (change < tol) {
        fit.intercept = next.intercept;
        fit.slope = std::clamp(next.slope, -0.99, 0.99);
        fit.sigma = std::max(next.sigma, 1e-8);
        ref.chain = discretize_ar1(fit.intercept, fit.slope, fit.sigma, n_grid, width);
        model.chain = ref.chain;
        ref.policy = solve_share_fixed_point(model, ref.chain);
        break;
      }
    }
    (void)prev_indices;
    const RecoveredOmega probe = recover_inclusive_values(ref.policy, observed_s0);
    const double vio = share_match_violation(ref.policy, observed_s0, probe);
    if (vio < best_vio) {
      best_vio = vio;
      best_fit = fit;
      best_chain = ref.chain;
      best_policy = ref.policy;
    }
    } catch (const std::exception&) {
      // this seed drifted onto an unsolvable grid; try the next one
    }
    if (best_vio < 1e-12) break;
  }
  if (!std::isfinite(best_vio))
    throw SolverError("fit_reference_car: no seed converged", 0.0);

  // The fixed-point map is nearly degenerate along one parameter direction,
  // so the iteration can stall a small distance from the data-reproducing
  // point. Polish by minimizing the share-match violation directly.
  if (best_vio > 1e-13) {
    std::array<double, 3> center{best_fit.intercept, best_fit.slope, best_fit.sigma};
    std::array<double, 3> radius{2e-3, 2e-3, 2e-3};
    SharePolicy warm = best_policy;
    auto eval_vio = [&](const std::array<double, 3>& th, Ar1Fit* out_fit,
                        MarkovChain* out_chain, SharePolicy* out_policy) {
      const double s1 = std::clamp(th[1], -0.99, 0.99);
      const double sg = std::max(th[2], 1e-8);
      MarkovChain chain = discretize_ar1(th[0], s1, sg, n_grid, width);
      model.chain = chain;
      SharePolicy pol = solve_share_fixed_point(model, chain, 1e-13, 200000, &warm);
      const RecoveredOmega rec = recover_inclusive_values(pol, observed_s0);
      const double v = share_match_violation(pol, observed_s0, rec);
      if (out_fit) *out_fit = Ar1Fit{th[0], s1, sg};
      if (out_chain) *out_chain = std::move(chain);
      if (out_policy) *out_policy = std::move(pol);
      return v;
    };
    for (int pass = 0; pass < 10 && best_vio > 1e-13; ++pass) {
      bool moved = false;
      for (int c = 0; c < 3; ++c) {
        for (double dir : {-1.0, 1.0}) {
          std::array<double, 3> cand = center;
          cand[c] += dir * radius[c];
          try {
            const double v = eval_vio(cand, nullptr, nullptr, nullptr);
            if (v < best_vio) {
              best_vio = v;
              center = cand;
              moved = true;
            }
          } catch (const std::exception&) {
          }
        }
      }
      if (!moved)
        for (double& r : radius) r *= 0.35;
    }
    eval_vio(center, &best_fit, &best_chain, &best_policy);
  }

  ref.ar1 = best_fit;
  ref.chain = std::move(best_chain);
  ref.policy = std::move(best_policy);
  ref.iterations = total_iters;
  model.chain = ref.chain;
  const RecoveredOmega rec = recover_inclusive_values(ref.policy, observed_s0);
  ref.recovered_omega = rec.omegas;
  ref.f0 = joint_from_chain(ref.chain);
  ref.vio_ref = share_match_violation(ref.policy, observed_s0, rec);
  const KdeEstimate kde =
      kde_fit(lag_pairs(rec.omegas), ref.chain.grid, ref.chain.grid, rule);
  ref.fixed_point_eps = kl_divergence(ref.f0, kde.evaluated);
  return ref;
}

TaxiReference fit_reference_taxi(const FiniteHorizonModel& model_in, std::size_t n_xi,
                                 double width, BandwidthRule rule, double tol,
                                 int max_iter) {
  FiniteHorizonModel model = model_in;
  const std::size_t T = model.horizon();
  const std::size_t days = model.counts.size();

  TaxiReference ref;
  // terminal layer is static: recover xi_T day by day on a wide provisional grid,
  // then fit the Gaussian stationary moments
  {
    FiniteHorizonModel terminal = model;
    terminal.xi_chain = discretize_ar1(0.0, 0.0, 5.0, std::max<std::size_t>(n_xi, 51), width);
    const CcpTable table = solve_finite_horizon(terminal, terminal.xi_chain);
    std::vector<double> xi_T;
    for (std::size_t m = 0; m < days; ++m)
      xi_T.push_back(recover_xi(table, terminal, m, T - 1).xi);
    double mean = 0.0;
    for (double x : xi_T) mean += x;
    mean /= static_cast<double>(days);
    double var = 0.0;
    for (double x : xi_T) var += (x - mean) * (x - mean);
    ref.mu_xi = mean;
    ref.sigma_xi = std::sqrt(std::max(var / static_cast<double>(days), 1e-12));
  }

  double rho = 0.5;
  for (int it = 0; it < max_iter; ++it) {
    const double mu = ref.mu_xi * (1.0 - rho);
    const double sigma = ref.sigma_xi * std::sqrt(1.0 - rho * rho);
    model.xi_chain = discretize_ar1(mu, rho, std::max(sigma, 1e-10), n_xi, width);
    ref.chain = model.xi_chain;
    ref.ccps = solve_finite_horizon(model, model.xi_chain);
    ref.recovered_xi.assign(days, std::vector<double>(T, 0.0));
    std::vector<double> pooled;
    double next_rho_num = 0.0, next_rho_den = 0.0;
    for (std::size_t m = 0; m < days; ++m) {
      for (std::size_t t = 0; t < T; ++t)
        ref.recovered_xi[m][t] = recover_xi(ref.ccps, model, m, t).xi;
      for (std::size_t t = 0; t + 1 < T; ++t) {
        const double x = ref.recovered_xi[m][t] - ref.mu_xi;
        const double y = ref.recovered_xi[m][t + 1] - ref.mu_xi;
        next_rho_num += x * y;
        next_rho_den += x * x;
      }
      for (double x : ref.recovered_xi[m]) pooled.push_back(x);
    }
    const double next_rho = std::clamp(next_rho_num / std::max(next_rho_den, 1e-12),
                                       -0.99, 0.99);
    ref.iterations = it + 1;
    if (std::abs(next_rho - rho) < tol) {
      rho = next_rho;
      break;
    }
    rho = 0.5 * (rho + next_rho);
  }
  ref.rho = rho;
  {
    const double mu = ref.mu_xi * (1.0 - rho);
    const double sigma = ref.sigma_xi * std::sqrt(1.0 - rho * rho);
    model.xi_chain = discretize_ar1(mu, rho, std::max(sigma, 1e-10), n_xi, width);
    ref.chain = model.xi_chain;
    ref.ccps = solve_finite_horizon(model, model.xi_chain);
  }
  ref.f0 = joint_from_chain(ref.chain);

  std::vector<std::array<double, 2>> pairs;
  double vio = 0.0;
  std::size_t cells = 0;
  for (std::size_t m = 0; m < days; ++m) {
    for (std::size_t t = 0; t < T; ++t)
      ref.recovered_xi[m][t] = recover_xi(ref.ccps, model, m, t).xi;
    for (std::size_t t = 0; t + 1 < T; ++t)
      pairs.push_back({ref.recovered_xi[m][t], ref.recovered_xi[m][t + 1]});
    for (std::size_t t = 0; t < T; ++t) {
      // achieved vs observed weighted CCP at the recovered xi
      double den = 0.0, achieved = 0.0;
      for (double c : model.counts[m][t]) den += c;
      for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki)
        achieved += model.counts[m][t][ki] / den *
                    ref.ccps.interp(ref.chain.grid, t, ki, model.w_bin[m][t],
                                    ref.recovered_xi[m][t]);
      vio += std::abs(achieved - model.observed_weighted_ccp(m, t));
      ++cells;
    }
  }
  ref.vio_ref = vio / static_cast<double>(cells);
  const KdeEstimate kde = kde_fit(pairs, ref.chain.grid, ref.chain.grid, rule);
  ref.fixed_point_eps = kl_divergence(ref.f0, kde.evaluated);
  return ref;
}

// --- CarProblem ---------------------------------------------------------------

CarProblem::CarProblem(InfiniteHorizonModel model, CarReference reference,
                       CarProblemOptions opts)
    : model_(std::move(model)), ref_(std::move(reference)), opts_(opts) {
  model_.chain = ref_.chain;
}

std::size_t CarProblem::dual_dim(ProblemMode mode) const {
  const std::size_t n = ref_.chain.grid.size();
  return mode == ProblemMode::Bound ? n + 1 : n;  // g plus log lambda_kl
}

double CarProblem::reference_scalar() const {
  return opts_.surplus ? ev_subsidy_surplus(ref_.policy, model_, opts_.t1).consumer_surplus
                       : industry_elasticity(ref_.policy, model_, opts_.t1);
}

AnnealState CarProblem::reference_state(ProblemMode mode) const {
  AnnealState s;
  s.duals.assign(dual_dim(mode), 0.0);
  s.policy = ref_.policy.s0;
  return s;
}

EvalOutcome CarProblem::evaluate(AnnealState& state, ProblemMode mode, Direction) {
  const std::size_t n = ref_.chain.grid.size();
  std::span<const double> g(state.duals.data(), n);
  const double lambda_kl =
      mode == ProblemMode::Bound
          ? std::clamp(std::exp(state.duals[n]), opts_.lambda_kl_floor, 1e6)
          : 1.0;

  SharePolicy policy{ref_.chain.grid, state.policy};
  const Matrix psi = bellman_residual_cost(policy, g, model_.beta);
  SinkhornOptions sopts;
  sopts.tol = opts_.sinkhorn_tol;
  sopts.max_iter = opts_.sinkhorn_max_iter;
  const DiscreteMeasure& nu0 = ref_.chain.stationary;
  EotSolution sol = sinkhorn(CostTensor({ref_.chain.grid, ref_.chain.grid}, psi.a),
                             {nu0, nu0}, lambda_kl, sopts, &ref_.f0);

  const MarkovChain worst = worst_case_kernel(sol.plan, &ref_.chain);
  SharePolicy warm{ref_.chain.grid, state.policy};
  SharePolicy updated =
      solve_share_fixed_point(model_, worst, opts_.share_tol, 200000, &warm);
  state.policy = updated.s0;

  const RecoveredOmega rec = recover_inclusive_values(updated, model_.observed_s0);
  const double vio_share =
      std::max(0.0, share_match_violation(updated, model_.observed_s0, rec) - ref_.vio_ref);

  const KdeEstimate kde =
      kde_fit(lag_pairs(rec.omegas), ref_.chain.grid, ref_.chain.grid, opts_.kde_rule);
  const double vio_fp =
      std::max(0.0, kl_divergence(sol.plan, kde.evaluated) - ref_.fixed_point_eps);

  EvalOutcome out;
  out.scalar = opts_.surplus
                   ? ev_subsidy_surplus(updated, model_, opts_.t1).consumer_surplus
                   : industry_elasticity(updated, model_, opts_.t1);
  out.kl = kl_divergence(sol.plan, ref_.f0);
  out.violation = vio_share + vio_fp;
  out.plan = std::move(sol.plan);
  return out;
}

AnnealState CarProblem::bound_to_robustness(const AnnealState& state) const {
  const std::size_t n = ref_.chain.grid.size();
  const double lambda_kl =
      std::clamp(std::exp(state.duals[n]), opts_.lambda_kl_floor, 1e6);
  AnnealState out;
  out.policy = state.policy;
  out.duals.assign(state.duals.begin(), state.duals.begin() + n);
  for (double& g : out.duals) g /= lambda_kl;
  return out;
}

// --- RawEotProblem --------------------------------------------------------------

RawEotProblem::RawEotProblem(RawEotSpec spec) : spec_(std::move(spec)) {
  if (spec_.marginals.empty()) {
    for (std::size_t i = 0; i < spec_.f0.arity(); ++i)
      spec_.marginals.push_back(marginal(spec_.f0, i));
  }
}

std::size_t RawEotProblem::dual_dim(ProblemMode) const {
  // moment multipliers plus one log multiplier (lambda_kl or lambda_s)
  return spec_.moments.terms.size() + 1;
}

AnnealState RawEotProblem::reference_state(ProblemMode mode) const {
  AnnealState s;
  s.duals.assign(dual_dim(mode), 0.0);
  // the trailing dual is a log multiplier; the reference evaluation must
  // reproduce F0, so lambda_kl starts at its ceiling (KL term dominant) and
  // lambda_s essentially at zero
  s.duals.back() = mode == ProblemMode::Robustness ? -46.0 : std::log(1e6);
  return s;
}

double RawEotProblem::reference_scalar() const {
  if (spec_.scalar.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < spec_.f0.flat_size(); ++i)
    acc += spec_.f0.tensor[i] * spec_.scalar[i];
  return acc;
}

EvalOutcome RawEotProblem::evaluate(AnnealState& state, ProblemMode mode, Direction dir) {
  const std::size_t dp = spec_.moments.terms.size();
  const double sign = dir == Direction::Lower ? 1.0 : -1.0;
  const double log_mult = state.duals[dp];
  const double lambda_kl =
      mode == ProblemMode::Bound
          ? std::clamp(std::exp(log_mult), spec_.lambda_kl_floor, 1e6)
          : 1.0;
  const double lambda_s =
      mode == ProblemMode::Robustness ? std::min(std::exp(log_mult), 1e4) : 1.0;

  std::size_t total = spec_.f0.flat_size();
  std::vector<double> c(total, 0.0);
  if (!spec_.scalar.empty())
    for (std::size_t i = 0; i < total; ++i) c[i] += sign * lambda_s * spec_.scalar[i];
  for (std::size_t r = 0; r < dp; ++r) {
    const double lam = std::clamp(state.duals[r], -1e4, 1e4);
    for (std::size_t i = 0; i < total; ++i) c[i] += lam * spec_.moments.terms[r].a[i];
  }

  SinkhornOptions sopts;
  sopts.tol = spec_.sinkhorn_tol;
  EotSolution sol =
      sinkhorn(CostTensor(spec_.grids, std::move(c)), spec_.marginals, lambda_kl, sopts,
               &spec_.f0);

  EvalOutcome out;
  out.scalar = 0.0;
  if (!spec_.scalar.empty())
    for (std::size_t i = 0; i < total; ++i) out.scalar += sol.plan.tensor[i] * spec_.scalar[i];
  double worst_moment = 0.0;
  for (std::size_t r = 0; r < dp; ++r) {
    double m = 0.0;
    for (std::size_t i = 0; i < total; ++i) m += sol.plan.tensor[i] * spec_.moments.terms[r].a[i];
    worst_moment = std::max(worst_moment, std::abs(m - spec_.moments.target[r]));
  }
  out.violation = std::max(0.0, worst_moment - spec_.moments.eps_n);
  out.kl = kl_divergence(sol.plan, spec_.f0);
  out.plan = std::move(sol.plan);
  return out;
}

AnnealState RawEotProblem::bound_to_robustness(const AnnealState& state) const {
  const std::size_t dp = spec_.moments.terms.size();
  const double lambda_kl =
      std::clamp(std::exp(state.duals[dp]), spec_.lambda_kl_floor, 1e6);
  AnnealState out = state;
  for (std::size_t r = 0; r < dp; ++r) out.duals[r] /= lambda_kl;
  out.duals[dp] = -std::log(lambda_kl);  // lambda_s = 1 / lambda_kl
  return out;
}

// --- TaxiProblem -----------------------------------------------------------------

TaxiProblem::TaxiProblem(FiniteHorizonModel model, TaxiReference reference,
                         TaxiProblemOptions opts)
    : model_(std::move(model)), ref_(std::move(reference)), opts_(opts) {
  model_.xi_chain = ref_.chain;
  model_raised_ = model_;
  model_raised_.earnings_scale.assign(model_.horizon(), 1.0);
  for (std::size_t t = 0; t < model_.horizon(); ++t)
    if (model_.hours[t] >= model_.frisch_start_hour) model_raised_.earnings_scale[t] = 1.01;
  table_len_ = 0;
  for (std::size_t t = 0; t < model_.horizon(); ++t)
    table_len_ += model_.k_sets[t].size() * model_.w_grid.size() * ref_.chain.grid.size();
}

std::size_t TaxiProblem::g_rows() const {
  std::size_t rows = 0;
  for (std::size_t t = 0; t + 1 < model_.horizon(); ++t) rows += model_.k_sets[t].size();
  return rows;
}

std::size_t TaxiProblem::dual_dim(ProblemMode) const {
  const std::size_t per_table =
      g_rows() * model_.w_grid.size() * ref_.chain.grid.size();
  return (opts_.frisch ? 2 * per_table : per_table) + 1;
}

void TaxiProblem::pack(const CcpTable& table, std::vector<double>& policy,
                       std::size_t offset) const {
  std::size_t idx = offset;
  for (std::size_t t = 0; t < table.T; ++t)
    for (const Matrix& m : table.p[t])
      for (double v : m.a) policy[idx++] = v;
}

CcpTable TaxiProblem::unpack(const std::vector<double>& policy, std::size_t offset,
                             const FiniteHorizonModel& m) const {
  CcpTable table;
  table.T = m.horizon();
  table.hours = m.hours;
  table.k_sets = m.k_sets;
  table.p.resize(table.T);
  table.log_p.resize(table.T);
  const std::size_t nw = m.w_grid.size();
  const std::size_t nxi = ref_.chain.grid.size();
  std::size_t idx = offset;
  for (std::size_t t = 0; t < table.T; ++t) {
    for (std::size_t ki = 0; ki < m.k_sets[t].size(); ++ki) {
      Matrix pm(nw, nxi), lpm(nw, nxi);
      for (std::size_t e = 0; e < nw * nxi; ++e) {
        pm.a[e] = policy[idx++];
        lpm.a[e] = std::log(pm.a[e]);
      }
      table.p[t].push_back(std::move(pm));
      table.log_p[t].push_back(std::move(lpm));
    }
  }
  return table;
}

double TaxiProblem::reference_scalar() const {
  if (!opts_.frisch)
    return stop_work_elasticity(ref_.ccps, model_, opts_.hour_index);
  const CcpTable raised = solve_finite_horizon(model_raised_, ref_.chain);
  return frisch_elasticity(ref_.ccps, raised, model_);
}

AnnealState TaxiProblem::reference_state(ProblemMode mode) const {
  AnnealState s;
  s.duals.assign(dual_dim(mode), 0.0);
  s.policy.assign(opts_.frisch ? 2 * table_len_ : table_len_, 0.0);
  pack(ref_.ccps, s.policy, 0);
  if (opts_.frisch) {
    const CcpTable raised = solve_finite_horizon(model_raised_, ref_.chain);
    pack(raised, s.policy, table_len_);
  }
  return s;
}

EvalOutcome TaxiProblem::evaluate(AnnealState& state, ProblemMode mode, Direction) {
  const std::size_t nw = model_.w_grid.size();
  const std::size_t nxi = ref_.chain.grid.size();
  const std::size_t per_table = g_rows() * nw * nxi;
  const std::size_t dp = dual_dim(mode);
  const double lambda_kl =
      mode == ProblemMode::Bound
          ? std::clamp(std::exp(state.duals[dp - 1]), opts_.lambda_kl_floor, 1e6)
          : 1.0;

  const CcpTable base = unpack(state.policy, 0, model_);

  MultiplierFunction g;
  std::size_t idx = 0;
  for (std::size_t r = 0; r < g_rows(); ++r) {
    g.g.emplace_back(state.duals.begin() + idx, state.duals.begin() + idx + nw * nxi);
    idx += nw * nxi;
  }
  Matrix psi = ccp_residual_cost(base, model_, g);
  if (opts_.frisch) {
    const CcpTable raised = unpack(state.policy, table_len_, model_raised_);
    MultiplierFunction g2;
    for (std::size_t r = 0; r < g_rows(); ++r) {
      g2.g.emplace_back(state.duals.begin() + idx, state.duals.begin() + idx + nw * nxi);
      idx += nw * nxi;
    }
    const Matrix psi2 = ccp_residual_cost(raised, model_raised_, g2);
    for (std::size_t e = 0; e < psi.a.size(); ++e) psi.a[e] += psi2.a[e];
  }

  SinkhornOptions sopts;
  sopts.tol = opts_.sinkhorn_tol;
  sopts.max_iter = opts_.sinkhorn_max_iter;
  const DiscreteMeasure& nu0 = ref_.chain.stationary;
  EotSolution sol = sinkhorn(CostTensor({ref_.chain.grid, ref_.chain.grid}, psi.a),
                             {nu0, nu0}, lambda_kl, sopts, &ref_.f0);
  const MarkovChain worst = worst_case_kernel(sol.plan, &ref_.chain);

  const CcpTable updated = solve_finite_horizon(model_, worst);
  pack(updated, state.policy, 0);
  CcpTable updated_raised;
  if (opts_.frisch) {
    updated_raised = solve_finite_horizon(model_raised_, worst);
    pack(updated_raised, state.policy, table_len_);
  }

  // latent recovery, matching violation, and the KDE fixed-point check
  const std::size_t T = model_.horizon();
  const std::size_t days = model_.counts.size();
  std::vector<std::array<double, 2>> pairs;
  double vio = 0.0;
  std::size_t cells = 0;
  for (std::size_t m = 0; m < days; ++m) {
    std::vector<double> xs(T);
    for (std::size_t t = 0; t < T; ++t) {
      xs[t] = recover_xi(updated, model_, m, t).xi;
      double den = 0.0, achieved = 0.0;
      for (double c : model_.counts[m][t]) den += c;
      for (std::size_t ki = 0; ki < model_.k_sets[t].size(); ++ki)
        achieved += model_.counts[m][t][ki] / den *
                    updated.interp(ref_.chain.grid, t, ki, model_.w_bin[m][t], xs[t]);
      vio += std::abs(achieved - model_.observed_weighted_ccp(m, t));
      ++cells;
    }
    for (std::size_t t = 0; t + 1 < T; ++t) pairs.push_back({xs[t], xs[t + 1]});
  }
  const double vio_match =
      std::max(0.0, vio / static_cast<double>(cells) - ref_.vio_ref);
  const KdeEstimate kde = kde_fit(pairs, ref_.chain.grid, ref_.chain.grid, opts_.kde_rule);
  const double vio_fp =
      std::max(0.0, kl_divergence(sol.plan, kde.evaluated) - ref_.fixed_point_eps);

  EvalOutcome out;
  out.scalar = opts_.frisch ? frisch_elasticity(updated, updated_raised, model_)
                            : stop_work_elasticity(updated, model_, opts_.hour_index);
  out.kl = kl_divergence(sol.plan, ref_.f0);
  out.violation = vio_match + vio_fp;
  out.plan = std::move(sol.plan);
  return out;
}

AnnealState TaxiProblem::bound_to_robustness(const AnnealState& state) const {
  const std::size_t dp = dual_dim(ProblemMode::Bound);
  const double lambda_kl =
      std::clamp(std::exp(state.duals[dp - 1]), opts_.lambda_kl_floor, 1e6);
  AnnealState out = state;
  for (std::size_t c = 0; c + 1 < dp; ++c) out.duals[c] /= lambda_kl;
  out.duals[dp - 1] = 0.0;
  return out;
}

// --- BridgeProblem -----------------------------------------------------------------

BridgeProblem::BridgeProblem(BridgeProblemSpec spec) : spec_(std::move(spec)) {}

std::size_t BridgeProblem::dual_dim(ProblemMode) const { return 1; }

AnnealState BridgeProblem::reference_state(ProblemMode mode) const {
  AnnealState s;
  s.duals.assign(dual_dim(mode), 0.0);
  s.duals[0] = mode == ProblemMode::Robustness ? -46.0 : std::log(1e6);
  return s;
}

double BridgeProblem::reference_scalar() const {
  return path_expected_cost(spec_.f0, spec_.scalar_steps);
}

EvalOutcome BridgeProblem::evaluate(AnnealState& state, ProblemMode mode, Direction dir) {
  const double sign = dir == Direction::Lower ? 1.0 : -1.0;
  const double mult = std::exp(state.duals[0]);
  const double lambda_kl =
      mode == ProblemMode::Bound ? std::clamp(mult, spec_.lambda_kl_floor, 1e6) : 1.0;
  const double lambda_s = mode == ProblemMode::Robustness ? std::min(mult, 1e4) : 1.0;

  PairwiseCost cost;
  for (const Matrix& s : spec_.scalar_steps.steps) {
    Matrix c = s;
    for (double& x : c.a) x *= sign * lambda_s;
    cost.steps.push_back(std::move(c));
  }

  const EndpointMeasure r = auxiliary_endpoint(spec_.f0, cost, lambda_kl);
  EotSolution sol =
      static_bridge(r, spec_.f0.initial, spec_.f0.terminal, lambda_kl, spec_.bridge_tol);
  const PathLaw worst = reconstruct_path_law(spec_.f0, cost, sol.potentials, lambda_kl);

  EvalOutcome out;
  out.scalar = path_expected_cost(worst, spec_.scalar_steps);
  out.kl = path_kl(worst, spec_.f0);
  out.violation = 0.0;
  out.plan = std::move(sol.plan);
  return out;
}

AnnealState BridgeProblem::bound_to_robustness(const AnnealState& state) const {
  const double lambda_kl = std::clamp(std::exp(state.duals[0]), spec_.lambda_kl_floor, 1e6);
  AnnealState out = state;
  out.duals[0] = -std::log(lambda_kl);  // lambda_s = 1 / lambda_kl
  return out;
}

}  // namespace robustdyn
