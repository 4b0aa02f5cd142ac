#include "robustdyn/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robustdyn/kernels.hpp"

namespace robustdyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> push_forward(const std::vector<double>& mu, const Matrix& K) {
  std::vector<double> out(K.cols, 0.0);
  for (std::size_t i = 0; i < K.rows; ++i) {
    if (mu[i] == 0.0) continue;
    for (std::size_t j = 0; j < K.cols; ++j) out[j] += mu[i] * K(i, j);
  }
  return out;
}

void check_cost(const PathLaw& f0, const PairwiseCost& cost) {
  if (cost.steps.size() + 1 != f0.horizon)
    throw std::invalid_argument("bridge: cost has wrong number of steps");
  const std::size_t n = f0.grid.size();
  for (const Matrix& c : cost.steps) {
    if (c.rows != n || c.cols != n)
      throw std::invalid_argument("bridge: cost step has wrong shape");
    for (double x : c.a)
      if (!std::isfinite(x)) throw std::invalid_argument("bridge: cost must be finite");
  }
}

}  // namespace

PathLaw::PathLaw(Grid g, DiscreteMeasure init, std::vector<Matrix> ks)
    : grid(std::move(g)), horizon(ks.size() + 1), initial(std::move(init)),
      kernels(std::move(ks)) {
  const std::size_t n = grid.size();
  if (horizon < 2) throw std::invalid_argument("PathLaw: horizon must be >= 2");
  if (initial.size() != n) throw std::invalid_argument("PathLaw: initial size mismatch");
  std::vector<double> mu = initial.weights;
  for (Matrix& K : kernels) {
    if (K.rows != n || K.cols != n)
      throw std::invalid_argument("PathLaw: kernel shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      double rs = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!(K(i, j) >= 0.0)) throw std::invalid_argument("PathLaw: negative kernel entry");
        rs += K(i, j);
      }
      if (std::abs(rs - 1.0) > 1e-9)
        throw std::invalid_argument("PathLaw: kernel row does not sum to 1");
      for (std::size_t j = 0; j < n; ++j) K(i, j) /= rs;
    }
    mu = push_forward(mu, K);
  }
  terminal = DiscreteMeasure(grid, std::move(mu));
}

EndpointMeasure auxiliary_endpoint(const PathLaw& f0, const PairwiseCost& cost,
                                   double lambda_kl) {
  if (!(lambda_kl > 0.0))
    throw std::invalid_argument("auxiliary_endpoint: lambda_kl must be > 0");
  check_cost(f0, cost);
  const std::size_t n = f0.grid.size();
  const std::size_t T = f0.horizon;

  // log W_t(i,j) = log K_t(i,j) - c_t(i,j)/lambda
  auto log_w = [&](std::size_t t, std::size_t i, std::size_t j) {
    const double k = f0.kernels[t](i, j);
    return k > 0.0 ? std::log(k) - cost.steps[t](i, j) / lambda_kl : -kInf;
  };

  // L(i,j) accumulates log of [diag(nu1) W_1 ... W_t](i,j)
  Matrix L(n, n, -kInf);
  for (std::size_t i = 0; i < n; ++i) {
    const double w1 = f0.initial.weights[i];
    if (w1 <= 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double lw = log_w(0, i, j);
      L(i, j) = lw == -kInf ? -kInf : std::log(w1) + lw;
    }
  }
  std::vector<double> terms(n);
  for (std::size_t t = 1; t + 1 < T; ++t) {
    Matrix next(n, n, -kInf);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < n; ++m) {
          const double lw = log_w(t, m, j);
          terms[m] = (L(i, m) == -kInf || lw == -kInf) ? -kInf : L(i, m) + lw;
        }
        next(i, j) = kernels::logsumexp(terms);
      }
    L = std::move(next);
  }

  double shift = -kInf;
  for (double x : L.a) shift = std::max(shift, x);
  if (shift == -kInf)
    throw std::runtime_error("auxiliary_endpoint: endpoint measure vanished");
  EndpointMeasure em;
  em.grid = f0.grid;
  em.log_scale = shift;
  em.values = Matrix(n, n);
  for (std::size_t idx = 0; idx < n * n; ++idx)
    em.values.a[idx] = L.a[idx] == -kInf ? 0.0 : std::exp(L.a[idx] - shift);
  return em;
}

EotSolution static_bridge(const EndpointMeasure& r, const DiscreteMeasure& nu1,
                          const DiscreteMeasure& nuT, double lambda_kl, double tol) {
  const std::size_t n = r.grid.size();
  if (nu1.size() != n || nuT.size() != n)
    throw std::invalid_argument("static_bridge: marginal size mismatch");
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double w1 = nu1.weights[i], wT = nuT.weights[j];
      if (w1 <= 0.0 || wT <= 0.0) {
        c[i * n + j] = kInf;
        continue;
      }
      const double rv = r.values(i, j);
      if (rv <= 0.0)
        throw std::runtime_error("static_bridge: reference measure vanishes at cell (" +
                                 std::to_string(i) + "," + std::to_string(j) +
                                 ") inside the marginal support");
      c[i * n + j] =
          -lambda_kl * (std::log(rv) + r.log_scale - std::log(w1) - std::log(wT));
    }
  SinkhornOptions opts;
  opts.tol = tol;
  return sinkhorn(CostTensor({r.grid, r.grid}, std::move(c)), {nu1, nuT}, lambda_kl, opts);
}

PathLaw reconstruct_path_law(const PathLaw& f0, const PairwiseCost& cost,
                             const Potentials& potentials, double lambda_kl) {
  check_cost(f0, cost);
  if (potentials.phi.size() != 2)
    throw std::invalid_argument("reconstruct_path_law: need the two bridge potentials");
  const std::size_t n = f0.grid.size();
  const std::size_t T = f0.horizon;
  const std::vector<double>& phi1 = potentials.phi[0];
  const std::vector<double>& phiT = potentials.phi[1];

  // backward messages: log beta_T = phi_T / lambda
  std::vector<std::vector<double>> log_beta(T);
  log_beta[T - 1].resize(n);
  for (std::size_t j = 0; j < n; ++j)
    log_beta[T - 1][j] = phiT[j] == -kInf ? -kInf : phiT[j] / lambda_kl;
  std::vector<double> terms(n);
  for (std::size_t t = T - 1; t-- > 0;) {
    log_beta[t].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double k = f0.kernels[t](i, j);
        terms[j] = (k > 0.0 && log_beta[t + 1][j] != -kInf)
                       ? std::log(k) - cost.steps[t](i, j) / lambda_kl + log_beta[t + 1][j]
                       : -kInf;
      }
      log_beta[t][i] = kernels::logsumexp(terms);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (f0.initial.weights[i] > 0.0 && log_beta[0][i] == -kInf)
      throw std::runtime_error("reconstruct_path_law: zero backward message on support");

  std::vector<Matrix> ks(T - 1);
  for (std::size_t t = 0; t < T - 1; ++t) {
    ks[t] = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (log_beta[t][i] == -kInf) {
        // unreachable under the tilted law; keep the reference row
        for (std::size_t j = 0; j < n; ++j) ks[t](i, j) = f0.kernels[t](i, j);
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double k = f0.kernels[t](i, j);
        ks[t](i, j) = (k > 0.0 && log_beta[t + 1][j] != -kInf)
                          ? std::exp(std::log(k) - cost.steps[t](i, j) / lambda_kl +
                                     log_beta[t + 1][j] - log_beta[t][i])
                          : 0.0;
      }
    }
  }
  return PathLaw(f0.grid, f0.initial, std::move(ks));
}

InitialPerturbedResult initial_perturbed_bridge(const PathLaw& f0, const PairwiseCost& cost,
                                                double lambda_kl, double delta1,
                                                const DiscreteMeasure& nuT, double tol,
                                                int max_iter) {
  if (delta1 < 0.0) throw std::invalid_argument("initial_perturbed_bridge: delta1 < 0");
  const EndpointMeasure r = auxiliary_endpoint(f0, cost, lambda_kl);
  const DiscreteMeasure& nu1 = f0.initial;
  const std::size_t n = nu1.size();
  const double inner_tol = std::min(tol * 1e-2, 1e-11);

  InitialPerturbedResult res;
  res.nu_star = nu1;
  res.endpoint = static_bridge(r, nu1, nuT, lambda_kl, inner_tol);
  res.value = res.endpoint.value;
  if (delta1 == 0.0) return res;

  // normalized measure from log weights
  auto from_logw = [&](const std::vector<double>& lw) {
    const double lz = kernels::logsumexp(lw);
    std::vector<double> w(n, 0.0);
    for (std::size_t u = 0; u < n; ++u)
      if (lw[u] != -kInf) w[u] = std::exp(lw[u] - lz);
    return DiscreteMeasure(nu1.grid, std::move(w));
  };

  // exponential tilt of nu1: weights ~ nu1 exp(scale * shift), normalized.
  // The shift is centered first so scale * shift never grows past ~1e3 and
  // the normalization stays exact to rounding.
  auto tilt = [&](const std::vector<double>& shift, double scale) {
    double ref = -kInf;
    for (std::size_t u = 0; u < n; ++u)
      if (nu1.weights[u] > 0.0) ref = std::max(ref, shift[u]);
    std::vector<double> lw(n, -kInf);
    for (std::size_t u = 0; u < n; ++u)
      if (nu1.weights[u] > 0.0)
        lw[u] = std::log(nu1.weights[u]) + scale * (shift[u] - ref);
    return from_logw(lw);
  };

  // KL projection onto the ball: geometric mixing toward nu1 with the mixing
  // exponent found by bisection on the binding radius
  auto project = [&](const DiscreteMeasure& mu) {
    if (kl_divergence(mu, nu1) <= delta1) return mu;
    std::vector<double> lw(n, -kInf);
    for (std::size_t u = 0; u < n; ++u)
      if (mu.weights[u] > 0.0) lw[u] = std::log(mu.weights[u]) - std::log(nu1.weights[u]);
    double lo = 0.0, hi = 1.0;  // mix share of mu: 1 = mu itself, 0 = nu1
    for (int b = 0; b < 200 && hi - lo > 1e-14; ++b) {
      const double mid = 0.5 * (lo + hi);
      if (kl_divergence(tilt(lw, mid), nu1) > delta1)
        hi = mid;
      else
        lo = mid;
    }
    return tilt(lw, lo);
  };

  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const std::vector<double>& phi = res.endpoint.potentials.phi[0];

    // Lemma-1 duality gap against the closed-form KL-ball linear oracle
    // nu' ~ nu1 exp(-phi/tau), tau bisected to the binding radius. The scale
    // floor keeps every tilt weight strictly positive.
    double span = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v)
        if (nu1.weights[u] > 0.0 && nu1.weights[v] > 0.0)
          span = std::max(span, std::abs(phi[u] - phi[v]));
    const double max_inv_tau = 700.0 / std::max(span, 1e-12);
    std::vector<double> neg_phi(n);
    for (std::size_t u = 0; u < n; ++u) neg_phi[u] = -phi[u];
    DiscreteMeasure oracle = tilt(neg_phi, max_inv_tau);
    if (kl_divergence(oracle, nu1) > delta1) {
      double lo = 0.0, hi = max_inv_tau;
      for (int b = 0; b < 200 && (hi - lo) > 1e-14 * max_inv_tau; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (kl_divergence(tilt(neg_phi, mid), nu1) > delta1)
          hi = mid;
        else
          lo = mid;
      }
      oracle = tilt(neg_phi, lo);
    }
    double gap = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      if (nu1.weights[u] > 0.0) gap += phi[u] * (res.nu_star.weights[u] - oracle.weights[u]);
    res.gap = gap;
    res.iterations = it;
    if (gap < tol) return res;

    // KL-projected entropic mirror-descent step with backtracking; the value
    // is nonincreasing by construction
    bool improved = false;
    double phi_min = kInf;
    for (std::size_t u = 0; u < n; ++u)
      if (nu1.weights[u] > 0.0) phi_min = std::min(phi_min, phi[u]);
    for (int h = 0; h < 60; ++h) {
      std::vector<double> lw(n, -kInf);
      for (std::size_t u = 0; u < n; ++u)
        if (res.nu_star.weights[u] > 0.0)
          lw[u] = std::log(res.nu_star.weights[u]) - step * (phi[u] - phi_min);
      const DiscreteMeasure cand = project(from_logw(lw));
      EotSolution sol = static_bridge(r, cand, nuT, lambda_kl, inner_tol);
      if (sol.value <= res.value - 1e-15) {
        res.nu_star = cand;
        res.endpoint = std::move(sol);
        res.value = res.endpoint.value;
        step = std::min(step * 2.0, 1e6);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      if (res.gap < std::max(tol, 1e-7)) return res;  // stalled at solver noise
      throw SolverError("initial_perturbed_bridge: descent stalled", res.gap);
    }
  }
  throw SolverError("initial_perturbed_bridge: did not reach the gap tolerance", res.gap);
}

std::vector<double> enumerate_path_tensor(const PathLaw& law) {
  const std::size_t n = law.grid.size();
  const std::size_t T = law.horizon;
  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) total *= n;
  std::vector<double> out(total);
  std::vector<std::size_t> idx(T, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t t = T; t-- > 0;) {
      idx[t] = rem % n;
      rem /= n;
    }
    double p = law.initial.weights[idx[0]];
    for (std::size_t t = 0; t + 1 < T && p > 0.0; ++t) p *= law.kernels[t](idx[t], idx[t + 1]);
    out[flat] = p;
  }
  return out;
}

double path_kl(const PathLaw& f, const PathLaw& f0) {
  if (f.horizon != f0.horizon || !(f.grid == f0.grid))
    throw std::invalid_argument("path_kl: laws are not comparable");
  const std::size_t n = f.grid.size();
  double acc = kernels::kl_sum(f.initial.weights, f0.initial.weights);
  std::vector<double> mu = f.initial.weights;
  for (std::size_t t = 0; t + 1 < f.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mu[i] == 0.0) continue;
      acc += mu[i] * kernels::kl_sum(f.kernels[t].row(i), f0.kernels[t].row(i));
      if (std::isinf(acc)) return acc;
    }
    mu = push_forward(mu, f.kernels[t]);
  }
  return acc;
}

DiscreteMeasure path_marginal(const PathLaw& law, std::size_t t) {
  if (t >= law.horizon) throw std::invalid_argument("path_marginal: period out of range");
  std::vector<double> mu = law.initial.weights;
  for (std::size_t s = 0; s < t; ++s) mu = push_forward(mu, law.kernels[s]);
  return DiscreteMeasure(law.grid, std::move(mu));
}

double path_expected_cost(const PathLaw& law, const PairwiseCost& cost) {
  check_cost(law, cost);
  const std::size_t n = law.grid.size();
  double acc = 0.0;
  std::vector<double> mu = law.initial.weights;
  for (std::size_t t = 0; t + 1 < law.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mu[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (law.kernels[t](i, j) > 0.0)
          acc += mu[i] * law.kernels[t](i, j) * cost.steps[t](i, j);
    }
    mu = push_forward(mu, law.kernels[t]);
  }
  return acc;
}

}  // namespace robustdyn
