#include "robustdyn/ddc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "robustdyn/kernels.hpp"

namespace robustdyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid_neg(double x) {  // 1 / (1 + exp(x))
  if (x >= 0.0) {
    const double t = std::exp(-x);
    return t / (1.0 + t);
  }
  return 1.0 / (1.0 + std::exp(x));
}

double softplus(double x) {  // log(1 + exp(x))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double log_odds_not(double s) {  // log((1 - s)/s)
  return std::log1p(-s) - std::log(s);
}

// x_i = omega_i - beta sum_j K(i,j) (omega_j - log(1 - s0_j))
void share_map_arg(const std::vector<double>& s0, double beta, const MarkovChain& kernel,
                   std::vector<double>& x) {
  const std::size_t n = s0.size();
  std::vector<double> inner(n);
  for (std::size_t j = 0; j < n; ++j) inner[j] = kernel.grid[j] - std::log1p(-s0[j]);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = kernel.grid[i] - beta * kernels::dot(kernel.kernel.row(i), inner);
}

// 4x4 linear solve, partial pivoting
std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> A, std::array<double, 4> b) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-12)
      throw std::runtime_error("eccp_first_stage: singular first stage");
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = A[r][col] / A[col][col];
      for (int c = col; c < 4; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < 4; ++c) acc -= A[r][c] * x[c];
    x[r] = acc / A[r][r];
  }
  return x;
}

}  // namespace

SharePolicy solve_share_fixed_point(const InfiniteHorizonModel& model,
                                    const MarkovChain& kernel, double tol, int max_iter,
                                    const SharePolicy* warm_start) {
  if (!(model.beta >= 0.0 && model.beta < 1.0))
    throw std::invalid_argument("solve_share_fixed_point: beta outside [0,1)");
  const std::size_t n = kernel.grid.size();
  if (!(kernel.grid == model.chain.grid))
    throw std::invalid_argument("solve_share_fixed_point: kernel grid mismatch");

  std::vector<double> s0(n, 0.5);
  if (warm_start && warm_start->s0.size() == n) s0 = warm_start->s0;
  std::vector<double> x(n);
  bool warned = false;
  const double damping = 0.5;

  for (int iter = 0; iter < max_iter; ++iter) {
    share_map_arg(s0, model.beta, kernel, x);
    double change = 0.0, residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double t = sigmoid_neg(x[i]);
      if (t <= 1e-14 || t >= 1.0 - 1e-14) {
        t = std::clamp(t, 1e-14, 1.0 - 1e-14);
        if (!warned) {
          std::fprintf(stderr, "solve_share_fixed_point: share clamped away from {0,1}\n");
          warned = true;
        }
      }
      const double next = s0[i] + damping * (t - s0[i]);
      change = std::max(change, std::abs(next - s0[i]));
      s0[i] = next;
    }
    if (change < tol) {
      share_map_arg(s0, model.beta, kernel, x);
      for (std::size_t i = 0; i < n; ++i)
        residual = std::max(residual, std::abs(log_odds_not(s0[i]) - x[i]));
      if (residual < 10.0 * tol) return SharePolicy{kernel.grid, std::move(s0)};
    }
  }
  throw SolverError("solve_share_fixed_point: no convergence", tol);
}

std::vector<double> solve_value_iteration(double beta, const MarkovChain& kernel, double tol,
                                          int max_iter) {
  const std::size_t n = kernel.grid.size();
  std::vector<double> v(n, 0.0), next(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = beta * kernels::dot(kernel.kernel.row(i), v);
      const double b = kernel.grid[i];
      next[i] = std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
      change = std::max(change, std::abs(next[i] - v[i]));
    }
    v.swap(next);
    if (change < tol) return v;
  }
  throw SolverError("solve_value_iteration: no convergence", tol);
}

double share_constraint_residual(const SharePolicy& policy, double beta,
                                 const MarkovChain& kernel) {
  const std::size_t n = policy.s0.size();
  std::vector<double> x(n);
  share_map_arg(policy.s0, beta, kernel, x);
  double r = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    r = std::max(r, std::abs(log_odds_not(policy.s0[i]) - x[i]));
  return r;
}

RecoveredOmega recover_inclusive_values(const SharePolicy& policy,
                                        const std::vector<double>& observed_s0) {
  const std::size_t n = policy.s0.size();
  bool increasing = true, decreasing = true;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(policy.s0[i] > policy.s0[i - 1])) increasing = false;
    if (!(policy.s0[i] < policy.s0[i - 1])) decreasing = false;
  }
  if (!increasing && !decreasing)
    throw std::runtime_error("recover_inclusive_values: share policy is not monotone");

  RecoveredOmega out;
  const double lo = std::min(policy.s0.front(), policy.s0.back());
  const double hi = std::max(policy.s0.front(), policy.s0.back());
  for (double obs : observed_s0) {
    if (obs < lo || obs > hi) out.clamped = true;
    std::size_t best = 0;
    double bestd = std::abs(policy.s0[0] - obs);
    for (std::size_t i = 1; i < n; ++i) {
      const double d = std::abs(policy.s0[i] - obs);
      if (d < bestd) {  // exact ties keep the lower omega
        bestd = d;
        best = i;
      }
    }
    out.indices.push_back(best);
    out.omegas.push_back(policy.grid[best]);
  }
  if (out.clamped)
    std::fprintf(stderr, "recover_inclusive_values: observation outside policy range\n");
  return out;
}

namespace {
std::size_t recover_node(const SharePolicy& policy, double observed) {
  RecoveredOmega r = recover_inclusive_values(policy, {observed});
  return r.indices[0];
}
}  // namespace

double industry_elasticity(const SharePolicy& policy, const InfiniteHorizonModel& model,
                           std::size_t t1) {
  if (t1 >= model.observed_s0.size())
    throw std::invalid_argument("industry_elasticity: period out of range");
  const double s0t = model.observed_s0[t1];
  const std::size_t node = recover_node(policy, s0t);
  const double shifted = policy.grid[node] + model.period_offsets[t1];
  const std::size_t node_cf = policy.grid.nearest(shifted);
  return (s0t - policy.s0[node_cf]) / (1.0 - s0t) * 100.0;
}

SurplusResult ev_subsidy_surplus(const SharePolicy& policy, const InfiniteHorizonModel& model,
                                 std::size_t t1) {
  if (t1 >= model.observed_s0.size())
    throw std::invalid_argument("ev_subsidy_surplus: period out of range");
  const double s0t = model.observed_s0[t1];
  const double offset = model.period_offsets[t1];
  const std::size_t node = recover_node(policy, s0t);
  const std::size_t node_cf = policy.grid.nearest(policy.grid[node] + offset);
  const double s1 = 1.0 - s0t;
  const double s1_cf = 1.0 - policy.s0[node_cf];
  const double market = t1 < model.market_size.size() ? model.market_size[t1] : 1.0;
  SurplusResult out;
  // V = omega - log s1, so the value gap is the offset net of the share response
  out.consumer_surplus = (offset - std::log(s1_cf / s1)) * market / (-model.alpha);
  const double ev_share =
      t1 < model.ev_conditional_shares.size() ? model.ev_conditional_shares[t1] : 0.0;
  out.cost = model.subsidy * market * s1_cf * ev_share;
  return out;
}

Matrix bellman_residual_cost(const SharePolicy& policy, std::span<const double> g,
                             double beta) {
  const std::size_t n = policy.s0.size();
  if (g.size() != n)
    throw std::invalid_argument("bellman_residual_cost: multiplier size mismatch");
  Matrix psi(n, n);
  std::vector<double> own(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    own[i] = log_odds_not(policy.s0[i]) - policy.grid[i];
    next[i] = beta * (policy.grid[i] - std::log1p(-policy.s0[i]));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) psi(i, j) = g[i] * (own[i] + next[j]);
  return psi;
}

double structural_residual(const Coupling& plan, const Matrix& psi) {
  if (plan.arity() != 2 || plan.grids[0].size() != psi.rows ||
      plan.grids[1].size() != psi.cols)
    throw std::invalid_argument("structural_residual: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < psi.rows; ++i)
    for (std::size_t j = 0; j < psi.cols; ++j)
      if (plan.at2(i, j) > 0.0) acc += plan.at2(i, j) * psi(i, j);
  return acc;
}

// --- finite horizon ----------------------------------------------------------

double FiniteHorizonModel::utility(std::size_t t, int k, double w) const {
  const double scale = t < earnings_scale.size() ? earnings_scale[t] : 1.0;
  const double kd = static_cast<double>(k);
  return theta[0] + theta[1] * kd + theta[2] * kd * kd + theta[3] * scale * w;
}

double FiniteHorizonModel::observed_weighted_ccp(std::size_t m, std::size_t t) const {
  double num = 0.0, den = 0.0;
  for (std::size_t ki = 0; ki < counts[m][t].size(); ++ki) {
    num += counts[m][t][ki] * observed_ccp[m][t][ki];
    den += counts[m][t][ki];
  }
  return num / den;
}

std::size_t CcpTable::k_index(std::size_t t, int k) const {
  const auto& ks = k_sets[t];
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return i;
  throw std::invalid_argument("CcpTable: hours-worked value " + std::to_string(k) +
                              " not tabulated at layer " + std::to_string(t));
}

double CcpTable::interp(const Grid& xi_grid, std::size_t t, std::size_t ki, std::size_t wbin,
                        double xi) const {
  const Matrix& tab = p[t][ki];
  const auto& pts = xi_grid.points;
  if (xi <= pts.front()) return tab(wbin, 0);
  if (xi >= pts.back()) return tab(wbin, pts.size() - 1);
  const auto it = std::upper_bound(pts.begin(), pts.end(), xi);
  const std::size_t hi = static_cast<std::size_t>(it - pts.begin());
  const std::size_t lo = hi - 1;
  const double frac = (xi - pts[lo]) / (pts[hi] - pts[lo]);
  return (1.0 - frac) * tab(wbin, lo) + frac * tab(wbin, hi);
}

CcpTable solve_finite_horizon(const FiniteHorizonModel& model, const MarkovChain& xi_kernel) {
  const std::size_t T = model.horizon();
  if (T < 2) throw std::invalid_argument("solve_finite_horizon: need at least 2 layers");
  if (!(xi_kernel.grid == model.xi_chain.grid))
    throw std::invalid_argument("solve_finite_horizon: xi kernel grid mismatch");
  const std::size_t nw = model.w_grid.size();
  const std::size_t nxi = xi_kernel.grid.size();
  if (model.w_kernel.rows != nw || model.w_kernel.cols != nw)
    throw std::invalid_argument("solve_finite_horizon: w kernel shape mismatch");
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (int k : model.k_sets[t])
      if (std::find(model.k_sets[t + 1].begin(), model.k_sets[t + 1].end(), k + 1) ==
          model.k_sets[t + 1].end())
        throw std::invalid_argument("solve_finite_horizon: k+1 missing from next layer");

  CcpTable out;
  out.T = T;
  out.hours = model.hours;
  out.k_sets = model.k_sets;
  out.p.resize(T);
  out.log_p.resize(T);

  auto fill_layer = [&](std::size_t t, std::size_t ki, const Matrix* cont) {
    const int k = model.k_sets[t][ki];
    Matrix pm(nw, nxi), lpm(nw, nxi);
    for (std::size_t w = 0; w < nw; ++w) {
      const double u = model.utility(t, k, model.w_grid[w]);
      for (std::size_t x = 0; x < nxi; ++x) {
        double v1 = u + xi_kernel.grid[x];
        if (cont) v1 -= model.beta * (*cont)(w, x);
        lpm(w, x) = -softplus(v1);
        pm(w, x) = std::clamp(std::exp(lpm(w, x)), 1e-300, 1.0 - 1e-16);
      }
    }
    out.p[t].push_back(std::move(pm));
    out.log_p[t].push_back(std::move(lpm));
  };

  for (std::size_t ki = 0; ki < model.k_sets[T - 1].size(); ++ki)
    fill_layer(T - 1, ki, nullptr);

  Matrix mixed(nw, nxi), cont(nw, nxi);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki) {
      const int k = model.k_sets[t][ki];
      const Matrix& lp_next = out.log_p[t + 1][out.k_index(t + 1, k + 1)];
      // E_{w'|w} then E_{xi'|xi} of log p_{t+1}(k+1, w', xi')
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t x = 0; x < nxi; ++x) {
          double acc = 0.0;
          for (std::size_t wp = 0; wp < nw; ++wp)
            acc += model.w_kernel(w, wp) * lp_next(wp, x);
          mixed(w, x) = acc;
        }
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t x = 0; x < nxi; ++x)
          cont(w, x) = kernels::dot(xi_kernel.kernel.row(x), mixed.row(w));
      fill_layer(t, ki, &cont);
    }
  }
  return out;
}

double ccp_constraint_residual(const CcpTable& ccps, const FiniteHorizonModel& model,
                               const MarkovChain& xi_kernel) {
  const std::size_t T = model.horizon();
  const std::size_t nw = model.w_grid.size();
  const std::size_t nxi = xi_kernel.grid.size();
  double worst = 0.0;
  Matrix mixed(nw, nxi);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki) {
      const int k = model.k_sets[t][ki];
      const Matrix& lp_next = ccps.log_p[t + 1][ccps.k_index(t + 1, k + 1)];
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t x = 0; x < nxi; ++x) {
          double acc = 0.0;
          for (std::size_t wp = 0; wp < nw; ++wp)
            acc += model.w_kernel(w, wp) * lp_next(wp, x);
          mixed(w, x) = acc;
        }
      for (std::size_t w = 0; w < nw; ++w) {
        const double u = model.utility(t, k, model.w_grid[w]);
        for (std::size_t x = 0; x < nxi; ++x) {
          const double elogp = kernels::dot(xi_kernel.kernel.row(x), mixed.row(w));
          const double pval = ccps.p[t][ki](w, x);
          const double r = log_odds_not(pval) - u - xi_kernel.grid[x] + model.beta * elogp;
          worst = std::max(worst, std::abs(r));
        }
      }
    }
  }
  return worst;
}

XiRecovery recover_xi(const CcpTable& ccps, const FiniteHorizonModel& model, std::size_t m,
                      std::size_t t) {
  const double target = model.observed_weighted_ccp(m, t);
  const std::size_t wbin = model.w_bin[m][t];
  const std::size_t nxi = model.xi_chain.grid.size();
  double den = 0.0;
  for (double c : model.counts[m][t]) den += c;

  std::vector<double> f(nxi, 0.0);
  for (std::size_t x = 0; x < nxi; ++x)
    for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki)
      f[x] += model.counts[m][t][ki] / den * ccps.p[t][ki](wbin, x);

  bool decreasing = true, increasing = true;
  for (std::size_t x = 1; x < nxi; ++x) {
    if (!(f[x] < f[x - 1])) decreasing = false;
    if (!(f[x] > f[x - 1])) increasing = false;
  }
  if (!decreasing && !increasing)
    throw std::runtime_error("recover_xi: weighted CCP is not monotone in xi");

  XiRecovery out;
  const double fmin = std::min(f.front(), f.back());
  const double fmax = std::max(f.front(), f.back());
  if (target > fmax || target < fmin) {
    out.clamped = true;
    const bool at_first = std::abs(f.front() - target) <= std::abs(f.back() - target);
    out.xi = at_first ? model.xi_chain.grid[0] : model.xi_chain.grid[nxi - 1];
    std::fprintf(stderr, "recover_xi: target outside achievable range, clamped\n");
    return out;
  }
  std::size_t lo = 0, hi = nxi - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    const bool go_right = decreasing ? f[mid] > target : f[mid] < target;
    if (go_right)
      lo = mid;
    else
      hi = mid;
  }
  const double frac = (target - f[lo]) / (f[hi] - f[lo]);
  out.xi = model.xi_chain.grid[lo] +
           frac * (model.xi_chain.grid[hi] - model.xi_chain.grid[lo]);
  return out;
}

double stop_work_elasticity(const CcpTable& ccps, const FiniteHorizonModel& model,
                            std::size_t t) {
  const std::size_t nw = model.w_grid.size();
  double total = 0.0;
  for (std::size_t m = 0; m < model.counts.size(); ++m)
    for (double c : model.counts[m][t]) total += c;

  double acc = 0.0;
  for (std::size_t m = 0; m < model.counts.size(); ++m) {
    const std::size_t wbin = model.w_bin[m][t];
    if (wbin + 1 >= nw) continue;  // top bin contributes zero
    const double w = model.w_grid[wbin];
    const double wp = model.w_grid[wbin + 1];
    const double xi = recover_xi(ccps, model, m, t).xi;
    for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki) {
      const double phat = model.observed_ccp[m][t][ki];
      const double pnew = ccps.interp(model.xi_chain.grid, t, ki, wbin + 1, xi);
      acc += model.counts[m][t][ki] / total * (pnew - phat) / phat * (wp - w) / w;
    }
  }
  return acc;
}

double frisch_elasticity(const CcpTable& ccps, const CcpTable& ccps_prime,
                         const FiniteHorizonModel& model) {
  const std::size_t T = model.horizon();
  std::size_t t0 = T;
  for (std::size_t t = 0; t < T; ++t)
    if (model.hours[t] == model.frisch_start_hour) t0 = t;
  if (t0 >= T) throw std::invalid_argument("frisch_elasticity: start hour not in model");

  const std::size_t days = model.counts.size();
  // xi paths recovered once from the base CCPs and reused for both tables
  std::vector<std::vector<double>> xi(days, std::vector<double>(T, 0.0));
  for (std::size_t m = 0; m < days; ++m)
    for (std::size_t t = t0; t < T; ++t) xi[m][t] = recover_xi(ccps, model, m, t).xi;

  auto hours_total = [&](const CcpTable& table) {
    double h = 0.0;
    for (std::size_t m = 0; m < days; ++m) {
      for (std::size_t ki = 0; ki < model.k_sets[t0].size(); ++ki) {
        const int k = model.k_sets[t0][ki];
        const double N = model.counts[m][t0][ki];
        if (N <= 0.0) continue;
        double surv = 1.0;
        for (std::size_t t = t0 + 1; t < T; ++t) {
          const std::size_t prev_ki = table.k_index(t - 1, k);
          surv *= 1.0 - table.interp(model.xi_chain.grid, t - 1, prev_ki,
                                     model.w_bin[m][t - 1], xi[m][t - 1]);
          const std::size_t cur_ki = table.k_index(t, k);
          const double pt =
              table.interp(model.xi_chain.grid, t, cur_ki, model.w_bin[m][t], xi[m][t]);
          h += N * static_cast<double>(model.hours[t] - model.hours[t0]) * pt * surv;
        }
      }
    }
    return h;
  };

  const double base = hours_total(ccps);
  const double raised = hours_total(ccps_prime);
  return (raised - base) / base * 100.0;
}

Matrix ccp_residual_cost(const CcpTable& ccps, const FiniteHorizonModel& model,
                         const MultiplierFunction& g) {
  const std::size_t T = model.horizon();
  const std::size_t nw = model.w_grid.size();
  const std::size_t nxi = model.xi_chain.grid.size();

  // observed w-bin frequencies per layer, weighted by counts
  std::vector<std::vector<double>> wdist(T, std::vector<double>(nw, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    double tot = 0.0;
    for (std::size_t m = 0; m < model.counts.size(); ++m) {
      double c = 0.0;
      for (double x : model.counts[m][t]) c += x;
      wdist[t][model.w_bin[m][t]] += c;
      tot += c;
    }
    for (double& x : wdist[t]) x /= tot;
  }

  Matrix psi(nxi, nxi, 0.0);
  std::size_t row = 0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t ki = 0; ki < model.k_sets[t].size(); ++ki, ++row) {
      const int k = model.k_sets[t][ki];
      if (row >= g.g.size())
        throw std::invalid_argument("ccp_residual_cost: multiplier row count mismatch");
      const std::vector<double>& gt = g.g[row];
      if (gt.size() != nw * nxi)
        throw std::invalid_argument("ccp_residual_cost: multiplier row size mismatch");
      const Matrix& lp_next = ccps.log_p[t + 1][ccps.k_index(t + 1, k + 1)];
      for (std::size_t w = 0; w < nw; ++w) {
        if (wdist[t][w] == 0.0) continue;
        const double u = model.utility(t, k, model.w_grid[w]);
        // B(w, xi') = beta E_{w'|w} log p_{t+1}(k+1, w', xi')
        std::vector<double> bterm(nxi, 0.0);
        for (std::size_t xp = 0; xp < nxi; ++xp) {
          double acc = 0.0;
          for (std::size_t wp = 0; wp < nw; ++wp)
            acc += model.w_kernel(w, wp) * lp_next(wp, xp);
          bterm[xp] = model.beta * acc;
        }
        for (std::size_t x = 0; x < nxi; ++x) {
          const double gv = wdist[t][w] * gt[w * nxi + x];
          if (gv == 0.0) continue;
          const double a =
              log_odds_not(ccps.p[t][ki](w, x)) - u - model.xi_chain.grid[x];
          for (std::size_t xp = 0; xp < nxi; ++xp) psi(x, xp) += gv * (a + bterm[xp]);
        }
      }
    }
  }
  return psi;
}

EccpFit eccp_first_stage(const EccpPanel& panel) {
  const std::size_t n = panel.rows.size();
  if (n < 4) throw std::invalid_argument("eccp_first_stage: not enough rows");
  std::array<std::array<double, 4>, 4> ztx{};
  std::array<double, 4> zty{};
  std::vector<std::array<double, 4>> X(n), Z(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const EccpRow& r = panel.rows[i];
    y[i] = log_odds_not(r.phat_t) + panel.beta * std::log(r.phat_next);
    X[i] = {1.0, r.k, r.k * r.k, r.w};
    Z[i] = {1.0, r.k, r.k * r.k, r.w_lag};
    for (int a = 0; a < 4; ++a) {
      zty[a] += Z[i][a] * y[i];
      for (int b = 0; b < 4; ++b) ztx[a][b] += Z[i][a] * X[i][b];
    }
  }
  EccpFit fit;
  fit.theta = solve4(ztx, zty);

  // sandwich for the exactly identified IV estimator; cluster-robust when the
  // rows carry cluster ids, HC0 otherwise
  std::array<std::array<double, 4>, 4> meat{};
  bool clustered = false;
  for (const EccpRow& r : panel.rows)
    if (r.cluster >= 0) clustered = true;
  if (clustered) {
    std::map<int, std::array<double, 4>> scores;
    for (std::size_t i = 0; i < n; ++i) {
      double e = y[i];
      for (int a = 0; a < 4; ++a) e -= X[i][a] * fit.theta[a];
      auto& s = scores[panel.rows[i].cluster];
      for (int a = 0; a < 4; ++a) s[a] += e * Z[i][a];
    }
    for (const auto& [id, s] : scores)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) meat[a][b] += s[a] * s[b];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double e = y[i];
      for (int a = 0; a < 4; ++a) e -= X[i][a] * fit.theta[a];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) meat[a][b] += e * e * Z[i][a] * Z[i][b];
    }
  }
  // V = (Z'X)^{-1} meat (X'Z)^{-1}: solve column by column
  std::array<std::array<double, 4>, 4> inv_cols{};
  for (int c = 0; c < 4; ++c) {
    std::array<double, 4> e{};
    e[c] = 1.0;
    inv_cols[c] = solve4(ztx, e);  // columns of (Z'X)^{-1}
  }
  for (int a = 0; a < 4; ++a) {
    double v = 0.0;
    for (int r = 0; r < 4; ++r)
      for (int s = 0; s < 4; ++s) v += inv_cols[r][a] * meat[r][s] * inv_cols[s][a];
    fit.se[a] = std::sqrt(std::max(v, 0.0));
  }
  return fit;
}

}  // namespace robustdyn
