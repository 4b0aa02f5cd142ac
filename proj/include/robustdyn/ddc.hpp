#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "robustdyn/eot.hpp"
#include "robustdyn/measures.hpp"

namespace robustdyn {

// --- infinite-horizon inclusive-value model -------------------------------

// Not-purchase share s_0(omega) on the omega grid, strictly inside (0,1).
struct SharePolicy {
  Grid grid;
  std::vector<double> s0;
};

struct InfiniteHorizonModel {
  double beta = 0.975;
  MarkovChain chain;                   // reference transition of omega
  std::vector<double> observed_s0;     // aggregate not-purchase share per period
  std::vector<double> period_offsets;  // counterfactual shift of omega per period
  double alpha = -1.0;                 // price coefficient
  std::vector<double> market_size;
  std::vector<double> ev_conditional_shares;  // EV share among purchases under the subsidy
  double subsidy = 3000.0;
};

// Damped fixed-point iteration on the share-space Bellman constraint
// log((1-s0)/s0) = omega - beta E[omega' - log(1-s0(omega')) | omega].
// Stops when the sup change and the constraint residual are both small.
SharePolicy solve_share_fixed_point(const InfiniteHorizonModel& model,
                                    const MarkovChain& kernel, double tol = 1e-12,
                                    int max_iter = 200000,
                                    const SharePolicy* warm_start = nullptr);

// V(omega) = log(exp(beta E[V|omega]) + exp(omega)) by value iteration.
std::vector<double> solve_value_iteration(double beta, const MarkovChain& kernel,
                                          double tol = 1e-13, int max_iter = 2000000);

// sup-norm residual of the share-space constraint under `kernel`
double share_constraint_residual(const SharePolicy& policy, double beta,
                                 const MarkovChain& kernel);

struct RecoveredOmega {
  std::vector<std::size_t> indices;  // nearest grid node per period
  std::vector<double> omegas;
  bool clamped = false;
};

// Nearest-node inversion of the share policy (ties break toward lower omega);
// observations outside the policy range clamp to the boundary node.
RecoveredOmega recover_inclusive_values(const SharePolicy& policy,
                                        const std::vector<double>& observed_s0);

// (s_{0t1} - s_0(omega'_{t1})) / (1 - s_{0t1}) * 100 with omega' the recovered
// node shifted by the period offset and snapped back to the grid.
double industry_elasticity(const SharePolicy& policy, const InfiniteHorizonModel& model,
                           std::size_t t1);

struct SurplusResult {
  double consumer_surplus = 0.0;
  double cost = 0.0;
};

SurplusResult ev_subsidy_surplus(const SharePolicy& policy, const InfiniteHorizonModel& model,
                                 std::size_t t1);

// psi(omega, omega') = g(omega) (log((1-s0)/s0)(omega) - omega + beta omega'
//                      - beta log(1-s0(omega'))), tabulated on the grid pair.
Matrix bellman_residual_cost(const SharePolicy& policy, std::span<const double> g,
                             double beta);

// E_plan[psi]
double structural_residual(const Coupling& plan, const Matrix& psi);

// --- finite-horizon stopping model ----------------------------------------

struct FiniteHorizonModel {
  double beta = 0.999999;
  std::array<double, 4> theta{};  // u = th0 + th1 k + th2 k^2 + th3 w (+ xi)
  Grid w_grid;                    // earnings bin values
  Matrix w_kernel;                // row-stochastic transition over bins
  MarkovChain xi_chain;           // reference supply-shock chain
  std::vector<int> hours;         // hour labels, first decision hour .. T
  std::vector<std::vector<int>> k_sets;  // feasible hours-worked per layer

  // observed panel: day m, layer t
  std::vector<std::vector<std::size_t>> w_bin;              // [m][t]
  std::vector<std::vector<std::vector<double>>> counts;     // N[m][t][ki]
  std::vector<std::vector<std::vector<double>>> observed_ccp;  // phat[m][t][ki]

  std::vector<double> earnings_scale;  // per-layer multiplier on theta[3]
  int frisch_start_hour = 11;

  std::size_t horizon() const { return hours.size(); }
  double utility(std::size_t t, int k, double w) const;
  double observed_weighted_ccp(std::size_t m, std::size_t t) const;
};

// CCPs of stopping, p[t][ki] as (w-bin x xi-node) matrices; terminal layer is
// the static logit. log_p carries -log-domain copies for stable recursion.
struct CcpTable {
  std::size_t T = 0;
  std::vector<int> hours;
  std::vector<std::vector<int>> k_sets;
  std::vector<std::vector<Matrix>> p;
  std::vector<std::vector<Matrix>> log_p;

  std::size_t k_index(std::size_t t, int k) const;
  // linear interpolation in xi between grid nodes
  double interp(const Grid& xi_grid, std::size_t t, std::size_t ki, std::size_t wbin,
                double xi) const;
};

CcpTable solve_finite_horizon(const FiniteHorizonModel& model, const MarkovChain& xi_kernel);

// sup-norm residual of log((1-p)/p) - u - xi + beta E[log p_{t+1}] over nodes
double ccp_constraint_residual(const CcpTable& ccps, const FiniteHorizonModel& model,
                               const MarkovChain& xi_kernel);

// Root of the weighted-average-CCP equation in xi (bisection on the grid with
// linear interpolation); targets outside the achievable range clamp to the
// boundary node.
struct XiRecovery {
  double xi = 0.0;
  bool clamped = false;
};
XiRecovery recover_xi(const CcpTable& ccps, const FiniteHorizonModel& model, std::size_t m,
                      std::size_t t);

double stop_work_elasticity(const CcpTable& ccps, const FiniteHorizonModel& model,
                            std::size_t t);

double frisch_elasticity(const CcpTable& ccps, const CcpTable& ccps_prime,
                         const FiniteHorizonModel& model);

// Multiplier-weighted sum of per-step Bellman residual costs on the (xi, xi')
// grid pair: g holds one (w-bin x xi-node) table per (t, k) row.
struct MultiplierFunction {
  std::vector<std::vector<double>> g;
};
Matrix ccp_residual_cost(const CcpTable& ccps, const FiniteHorizonModel& model,
                         const MultiplierFunction& g);

// --- ECCP first stage -------------------------------------------------------

struct EccpRow {
  double phat_t = 0.0;      // observed CCP of stopping at (m, t, k)
  double phat_next = 0.0;   // observed CCP at (m, t+1, k+1)
  double k = 0.0;
  double w = 0.0;
  double w_lag = 0.0;  // previous day's earnings, same hour (instrument)
  int cluster = -1;    // standard-error cluster (day); -1 for plain HC0
};

struct EccpPanel {
  double beta = 0.999999;
  std::vector<EccpRow> rows;
};

struct EccpFit {
  std::array<double, 4> theta{};
  std::array<double, 4> se{};
};

// 2SLS of log((1-phat)/phat) + beta log phat_next on (1, k, k^2, w),
// instrumented by (1, k, k^2, w_lag).
EccpFit eccp_first_stage(const EccpPanel& panel);

// --- moment systems ---------------------------------------------------------

struct MomentSystem {
  std::vector<Matrix> terms;  // one tensor per moment row on the (xi, xi') grids
  std::vector<double> target;
  double eps_n = 0.0;
};

}  // namespace robustdyn
