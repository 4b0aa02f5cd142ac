#include "robustdyn/eot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "robustdyn/kernels.hpp"

namespace robustdyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// expectation of phi under weights, skipping zero-weight bins (phi is -inf there)
double expectation(std::span<const double> w, std::span<const double> phi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) acc += w[i] * phi[i];
  return acc;
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

// log of the reference tensor; product of the marginals when none is given
std::vector<double> log_reference(const std::vector<DiscreteMeasure>& marginals,
                                  const Coupling* reference,
                                  const std::vector<std::size_t>& dims,
                                  const std::vector<std::size_t>& strides) {
  std::size_t total = 1;
  for (std::size_t d : dims) total *= d;
  std::vector<double> logR(total);
  if (reference) {
    for (std::size_t idx = 0; idx < total; ++idx)
      logR[idx] = reference->tensor[idx] > 0.0 ? std::log(reference->tensor[idx]) : -kInf;
  } else {
    for (std::size_t idx = 0; idx < total; ++idx) {
      double s = 0.0;
      for (std::size_t i = 0; i < dims.size(); ++i) {
        const double w = marginals[i].weights[(idx / strides[i]) % dims[i]];
        if (w > 0.0)
          s += std::log(w);
        else {
          s = -kInf;
          break;
        }
      }
      logR[idx] = s;
    }
  }
  return logR;
}

struct SinkhornWork {
  std::size_t k = 0;
  std::vector<std::size_t> dims, strides;
  std::size_t total = 0;
  std::vector<double> logR;
  const CostTensor* cost = nullptr;
  const std::vector<DiscreteMeasure>* marginals = nullptr;
  double lambda = 0.0;

  // k == 2 fast path: contiguous rows for both update directions
  bool fast2 = false;
  Matrix cost_m, cost_t, ref_m, ref_t;
};

void check_inputs(const CostTensor& cost, const std::vector<DiscreteMeasure>& marginals,
                  double lambda_kl, const Coupling* reference) {
  if (!(lambda_kl > 0.0)) throw std::invalid_argument("sinkhorn: lambda_kl must be > 0");
  if (cost.arity() != marginals.size())
    throw std::invalid_argument("sinkhorn: marginal count does not match cost arity");
  for (std::size_t i = 0; i < marginals.size(); ++i)
    if (!(marginals[i].grid == cost.grids[i]))
      throw std::invalid_argument("sinkhorn: marginal grid mismatch on axis " +
                                  std::to_string(i));
  if (reference) {
    if (reference->arity() != cost.arity())
      throw std::invalid_argument("sinkhorn: reference arity mismatch");
    for (std::size_t i = 0; i < cost.arity(); ++i)
      if (!(reference->grids[i] == cost.grids[i]))
        throw std::invalid_argument("sinkhorn: reference grid mismatch");
  }
  if (cost.arity() > 4)
    throw std::invalid_argument("sinkhorn: more than 4 marginals is unsupported");
}

SinkhornWork make_work(const CostTensor& cost, const std::vector<DiscreteMeasure>& marginals,
                       double lambda_kl, const Coupling* reference) {
  SinkhornWork w;
  w.k = cost.arity();
  w.dims = cost.dims();
  w.strides = strides_of(w.dims);
  w.total = cost.values.size();
  w.logR = log_reference(marginals, reference, w.dims, w.strides);
  w.cost = &cost;
  w.marginals = &marginals;
  w.lambda = lambda_kl;
  if (w.k == 2) {
    w.fast2 = true;
    const std::size_t n0 = w.dims[0], n1 = w.dims[1];
    w.cost_m = Matrix(n0, n1);
    w.cost_t = Matrix(n1, n0);
    w.ref_m = Matrix(n0, n1);
    w.ref_t = Matrix(n1, n0);
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j) {
        const double c = cost.values[i * n1 + j];
        const double r = std::exp(w.logR[i * n1 + j]);
        w.cost_m(i, j) = c;
        w.cost_t(j, i) = c;
        w.ref_m(i, j) = r;
        w.ref_t(j, i) = r;
      }
  }
  return w;
}

// log S_j(t) = log sum over the slice {bin_j = t} of R * exp((sum_{i!=j} phi_i - c)/lambda)
void axis_log_mass(const SinkhornWork& w, const std::vector<std::vector<double>>& phi,
                   std::size_t axis, std::vector<double>& out) {
  const std::size_t d = w.dims[axis];
  out.assign(d, -kInf);
  if (w.fast2) {
    const Matrix& C = axis == 0 ? w.cost_m : w.cost_t;
    const Matrix& R = axis == 0 ? w.ref_m : w.ref_t;
    const std::vector<double>& other = phi[1 - axis];
    const double inv_lambda = 1.0 / w.lambda;
    for (std::size_t t = 0; t < d; ++t)
      out[t] = kernels::tilt_logsumexp(C.row(t), other, R.row(t), inv_lambda);
    return;
  }
  std::vector<double> mx(d, -kInf), acc(d, 0.0);
  const std::size_t k = w.k;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t idx = 0; idx < w.total; ++idx) {
      const double lr = w.logR[idx];
      if (lr == -kInf) continue;
      double s = 0.0;
      std::size_t t = 0;
      bool dead = false;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t bin = (idx / w.strides[i]) % w.dims[i];
        if (i == axis) {
          t = bin;
        } else {
          const double p = phi[i][bin];
          if (p == -kInf) {
            dead = true;
            break;
          }
          s += p;
        }
      }
      if (dead) continue;
      const double val = lr + (s - w.cost->values[idx]) / w.lambda;
      if (val == -kInf) continue;
      if (pass == 0) {
        if (val > mx[t]) mx[t] = val;
      } else {
        acc[t] += std::exp(val - mx[t]);
      }
    }
  }
  for (std::size_t t = 0; t < d; ++t)
    out[t] = mx[t] == -kInf ? -kInf : mx[t] + std::log(acc[t]);
}

Coupling materialize_plan(const SinkhornWork& w, const std::vector<std::vector<double>>& phi) {
  std::vector<double> t(w.total);
  for (std::size_t idx = 0; idx < w.total; ++idx) {
    double lr = w.logR[idx];
    if (lr == -kInf) {
      t[idx] = 0.0;
      continue;
    }
    double s = 0.0;
    bool dead = false;
    for (std::size_t i = 0; i < w.k; ++i) {
      const double p = phi[i][(idx / w.strides[i]) % w.dims[i]];
      if (p == -kInf) {
        dead = true;
        break;
      }
      s += p;
    }
    const double c = w.cost->values[idx];
    t[idx] = (dead || c == kInf) ? 0.0 : std::exp(lr + (s - c) / w.lambda);
  }
  return Coupling(w.cost->grids, std::move(t));
}

double marginal_error(const Coupling& plan, const std::vector<DiscreteMeasure>& marginals) {
  double err = 0.0;
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    const DiscreteMeasure m = marginal(plan, i);
    for (std::size_t t = 0; t < m.size(); ++t)
      err = std::max(err, std::abs(m.weights[t] - marginals[i].weights[t]));
  }
  return err;
}

}  // namespace

CostTensor::CostTensor(std::vector<Grid> gs, std::vector<double> v)
    : grids(std::move(gs)), values(std::move(v)) {
  if (grids.size() < 2) throw std::invalid_argument("CostTensor: arity must be >= 2");
  std::size_t n = 1;
  for (const Grid& g : grids) n *= g.size();
  if (values.size() != n) throw std::invalid_argument("CostTensor: value size mismatch");
  for (double x : values)
    if (std::isnan(x) || x == -kInf)
      throw std::invalid_argument("CostTensor: entries must be finite or +inf");
}

std::vector<std::size_t> CostTensor::dims() const {
  std::vector<std::size_t> d(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) d[i] = grids[i].size();
  return d;
}

CostTensor absorb_reference(const CostTensor& cost, const Coupling& f0, double lambda_kl) {
  if (!(lambda_kl > 0.0))
    throw std::invalid_argument("absorb_reference: lambda_kl must be > 0");
  if (f0.arity() != cost.arity() || f0.flat_size() != cost.values.size())
    throw std::invalid_argument("absorb_reference: shape mismatch");
  std::vector<DiscreteMeasure> margs;
  margs.reserve(f0.arity());
  for (std::size_t i = 0; i < f0.arity(); ++i) margs.push_back(marginal(f0, i));
  const Coupling prod = product_coupling(margs);
  std::vector<double> out(cost.values.size());
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    const double p = prod.tensor[idx];
    const double q = f0.tensor[idx];
    double rho;
    if (q > 0.0)
      rho = p > 0.0 ? std::log(p / q) : -kInf;  // cell has no product mass: unreachable anyway
    else
      rho = p > 0.0 ? kInf : 0.0;
    const double c = cost.values[idx];
    out[idx] = (rho == -kInf) ? c : c + lambda_kl * rho;
    if (std::isnan(out[idx])) out[idx] = kInf;  // inf cost on a zero-mass cell
  }
  return CostTensor(cost.grids, std::move(out));
}

EotSolution sinkhorn(const CostTensor& cost, const std::vector<DiscreteMeasure>& marginals,
                     double lambda_kl, const SinkhornOptions& opts,
                     const Coupling* reference) {
  check_inputs(cost, marginals, lambda_kl, reference);
  SinkhornWork w = make_work(cost, marginals, lambda_kl, reference);
  const std::size_t k = w.k;

  std::vector<std::vector<double>> phi(k);
  std::vector<std::vector<double>> lognu(k);
  for (std::size_t i = 0; i < k; ++i) {
    phi[i].assign(w.dims[i], 0.0);
    lognu[i].assign(w.dims[i], 0.0);
    for (std::size_t t = 0; t < w.dims[i]; ++t) {
      const double wt = marginals[i].weights[t];
      lognu[i][t] = wt > 0.0 ? std::log(wt) : -kInf;
      if (wt <= 0.0) phi[i][t] = -kInf;
    }
  }

  std::vector<double> logS;
  double res = kInf;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    double sup_change = 0.0;
    double phi_scale = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
      axis_log_mass(w, phi, j, logS);
      for (std::size_t t = 0; t < w.dims[j]; ++t) {
        if (marginals[j].weights[t] <= 0.0) continue;
        if (logS[t] == -kInf)
          throw SolverError("sinkhorn: marginal bin " + std::to_string(t) + " on axis " +
                                std::to_string(j) + " is unreachable",
                            res);
        const double next = lambda_kl * (lognu[j][t] - logS[t]);
        if (!std::isfinite(next)) throw SolverError("sinkhorn: non-finite potential", res);
        sup_change = std::max(sup_change, std::abs(next - phi[j][t]));
        phi_scale = std::max(phi_scale, std::abs(next));
        phi[j][t] = next;
      }
    }
    res = sup_change;
    // potentials near the floating-point floor rattle by a few thousand ulps
    // of their own magnitude; below that nothing further can be extracted
    const double fp_floor = 4096.0 * std::numeric_limits<double>::epsilon() * phi_scale;
    if (sup_change < std::max(opts.tol, fp_floor)) {
      const Coupling probe = materialize_plan(w, phi);
      if (marginal_error(probe, marginals) < 10.0 * opts.tol || sup_change < fp_floor) {
        ++iter;
        break;
      }
    }
  }
  if (iter >= opts.max_iter) {
    const double marg = marginal_error(materialize_plan(w, phi), marginals);
    std::ostringstream msg;
    msg << "sinkhorn: no convergence after " << opts.max_iter << " iterations (residual "
        << res << ", marginal error " << marg << ")";
    throw SolverError(msg.str(), res);
  }

  // value and the additive-constant gauge: every potential centered to value/k
  double value = 0.0;
  std::vector<double> ex(k);
  for (std::size_t i = 0; i < k; ++i) {
    ex[i] = expectation(marginals[i].weights, phi[i]);
    value += ex[i];
  }
  const double target = value / static_cast<double>(k);
  double shift_sum = 0.0;
  for (std::size_t i = 1; i < k; ++i) {
    const double s = target - ex[i];
    shift_sum += s;
    for (std::size_t t = 0; t < w.dims[i]; ++t)
      if (marginals[i].weights[t] > 0.0) phi[i][t] += s;
  }
  for (std::size_t t = 0; t < w.dims[0]; ++t)
    if (marginals[0].weights[t] > 0.0) phi[0][t] -= shift_sum;

  EotSolution sol;
  sol.potentials.phi = std::move(phi);
  sol.plan = materialize_plan(w, sol.potentials.phi);
  sol.value = value;
  sol.iterations = iter;
  sol.residual = res;
  return sol;
}

double eot_value_dual(const Potentials& potentials, const CostTensor& cost,
                      const std::vector<DiscreteMeasure>& marginals, const Coupling& f0,
                      double lambda_kl) {
  check_inputs(cost, marginals, lambda_kl, &f0);
  const auto dims = cost.dims();
  const auto strides = strides_of(dims);
  const std::size_t k = dims.size();
  if (potentials.phi.size() != k)
    throw std::invalid_argument("eot_value_dual: potential count mismatch");

  double lin = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    lin += expectation(marginals[i].weights, potentials.phi[i]);

  const std::size_t total = cost.values.size();
  std::vector<double> logterms(total, -kInf);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const double f = f0.tensor[idx];
    if (f <= 0.0) continue;
    double s = 0.0;
    bool dead = false;
    for (std::size_t i = 0; i < k; ++i) {
      const double p = potentials.phi[i][(idx / strides[i]) % dims[i]];
      if (p == -kInf) {
        dead = true;
        break;
      }
      s += p;
    }
    if (dead || cost.values[idx] == kInf) continue;
    logterms[idx] = std::log(f) + (s - cost.values[idx]) / lambda_kl;
  }
  const double lse = kernels::logsumexp(logterms);
  const double mass = lse == -kInf ? 0.0 : std::exp(lse);
  return lin - lambda_kl * mass + lambda_kl;
}

double expected_cost(const Coupling& plan, const CostTensor& cost) {
  if (plan.flat_size() != cost.values.size())
    throw std::invalid_argument("expected_cost: shape mismatch");
  double acc = 0.0;
  for (std::size_t idx = 0; idx < plan.flat_size(); ++idx)
    if (plan.tensor[idx] > 0.0) acc += plan.tensor[idx] * cost.values[idx];
  return acc;
}

MarkovChain worst_case_kernel(const Coupling& plan, const MarkovChain* reference) {
  if (plan.arity() != 2 || plan.grids[0].size() != plan.grids[1].size() ||
      !(plan.grids[0] == plan.grids[1]))
    throw std::invalid_argument("worst_case_kernel: need a square two-marginal plan");
  const std::size_t n = plan.grids[0].size();
  const DiscreteMeasure m0 = marginal(plan, 0);
  const DiscreteMeasure m1 = marginal(plan, 1);
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(m0.weights[i] - m1.weights[i]) > 1e-6)
      throw std::invalid_argument("worst_case_kernel: plan marginals differ beyond 1e-6");

  Matrix K(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += plan.at2(i, j);
    if (rs > 0.0) {
      for (std::size_t j = 0; j < n; ++j) K(i, j) = plan.at2(i, j) / rs;
    } else if (reference) {
      for (std::size_t j = 0; j < n; ++j) K(i, j) = reference->kernel(i, j);
    } else {
      for (std::size_t j = 0; j < n; ++j) K(i, j) = m0.weights[j];
    }
  }
  std::vector<double> pi = stationary_from_kernel(K, 1e-12);
  return MarkovChain(plan.grids[0], std::move(K), DiscreteMeasure(plan.grids[0], std::move(pi)));
}

namespace {

// The inner sup over potentials at fixed eta equals, by the minimax swap,
// inf over nu of G(nu) = eta KL(nu || nu0) + EOT((nu, nu); f0). The first-
// order condition is the exponential tilt nu* ~ nu0 exp(-(phi1+phi2)/eta),
// iterated here with geometric damping and a monitored descent on G.
struct StatPerturbInner {
  const CostTensor* cost;
  const Coupling* f0;
  const DiscreteMeasure* nu0;
  double lambda, eta, tol;
  int iters = 0;

  double g_value(const DiscreteMeasure& nu, EotSolution* sol_out) {
    SinkhornOptions opts;
    opts.tol = tol;
    opts.max_iter = 1000000;
    EotSolution sol = sinkhorn(*cost, {nu, nu}, lambda, opts, f0);
    const double g = eta * kl_divergence(nu, *nu0) + sol.value;
    if (sol_out) *sol_out = std::move(sol);
    return g;
  }

  // returns the minimized G; nu and sol land on the optimum
  double solve(DiscreteMeasure& nu, EotSolution& sol) {
    const std::size_t n = nu0->size();
    double g_cur = g_value(nu, &sol);
    for (int it = 0; it < 300; ++it) {
      ++iters;
      // tilt target from the current potentials
      std::vector<double> logt(n, -kInf);
      for (std::size_t u = 0; u < n; ++u) {
        if (nu0->weights[u] <= 0.0) continue;
        const double psum = sol.potentials.phi[0][u] + sol.potentials.phi[1][u];
        logt[u] = std::log(nu0->weights[u]) - psum / eta;
      }
      const double shift = kernels::logsumexp(logt);
      double alpha = 1.0;
      bool moved = false;
      for (int h = 0; h < 25; ++h) {
        std::vector<double> w(n, 0.0);
        double total = 0.0, change = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
          if (logt[u] == -kInf) continue;
          const double logmix = (1.0 - alpha) * std::log(nu.weights[u]) +
                                alpha * (logt[u] - shift);
          w[u] = std::exp(logmix);
          total += w[u];
        }
        for (std::size_t u = 0; u < n; ++u) {
          w[u] /= total;
          change = std::max(change, std::abs(w[u] - nu.weights[u]));
        }
        DiscreteMeasure cand(nu0->grid, w);
        EotSolution cand_sol;
        const double g_cand = g_value(cand, &cand_sol);
        if (g_cand <= g_cur + 1e-13) {
          const bool converged = change < tol && g_cur - g_cand < 1e-13;
          nu = std::move(cand);
          sol = std::move(cand_sol);
          g_cur = g_cand;
          moved = true;
          if (converged) return g_cur;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) return g_cur;  // descent stalled at solver precision
    }
    return g_cur;
  }
};

}  // namespace

StationaryPerturbedResult stationary_perturbed_eot(const CostTensor& cost,
                                                   const DiscreteMeasure& nu0,
                                                   const Coupling& f0, double lambda_kl,
                                                   double delta1, double tol) {
  if (cost.arity() != 2 || !(cost.grids[0] == cost.grids[1]))
    throw std::invalid_argument("stationary_perturbed_eot: cost must be square");
  if (!(cost.grids[0] == nu0.grid))
    throw std::invalid_argument("stationary_perturbed_eot: nu0 grid mismatch");
  if (delta1 < 0.0) throw std::invalid_argument("stationary_perturbed_eot: delta1 < 0");

  if (delta1 == 0.0) {
    SinkhornOptions opts;
    opts.tol = tol;
    EotSolution sol = sinkhorn(cost, {nu0, nu0}, lambda_kl, opts, &f0);
    StationaryPerturbedResult r;
    r.value = sol.value;
    r.plan = std::move(sol.plan);
    r.nu_star = nu0;
    r.eta = kInf;
    r.iterations = sol.iterations;
    return r;
  }

  // golden-section maximization of D(eta) = min_nu G(nu) - eta delta1 over log(eta)
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = std::log(1e-6), hi = std::log(1e6);
  const double inner_tol = std::min(tol, 1e-10);

  StatPerturbInner inner;
  inner.cost = &cost;
  inner.f0 = &f0;
  inner.nu0 = &nu0;
  inner.lambda = lambda_kl;
  inner.tol = inner_tol;

  DiscreteMeasure nu = nu0;  // warm start carried across eta probes
  EotSolution sol;
  auto eval = [&](double z) {
    inner.eta = std::exp(z);
    return inner.solve(nu, sol) - inner.eta * delta1;
  };

  double z1 = hi - golden * (hi - lo);
  double z2 = lo + golden * (hi - lo);
  double f1 = eval(z1);
  double f2 = eval(z2);
  while (hi - lo > 1e-9) {
    if (f1 < f2) {
      lo = z1;
      z1 = z2;
      f1 = f2;
      z2 = lo + golden * (hi - lo);
      f2 = eval(z2);
    } else {
      hi = z2;
      z2 = z1;
      f2 = f1;
      z1 = hi - golden * (hi - lo);
      f1 = eval(z1);
    }
  }
  const double z_opt = 0.5 * (lo + hi);
  const double value = eval(z_opt);

  StationaryPerturbedResult r;
  r.value = value;
  r.plan = std::move(sol.plan);
  r.nu_star = std::move(nu);
  r.eta = std::exp(z_opt);
  r.iterations = inner.iters;
  return r;
}

}  // namespace robustdyn
