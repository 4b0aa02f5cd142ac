#pragma once

#include <vector>

#include "robustdyn/eot.hpp"
#include "robustdyn/measures.hpp"

namespace robustdyn {

// Time-inhomogeneous Markov law on a common state grid: initial distribution
// plus T-1 per-step kernels. The terminal marginal is implied and stored.
struct PathLaw {
  Grid grid;
  std::size_t horizon = 0;  // T
  DiscreteMeasure initial;
  std::vector<Matrix> kernels;  // kernels[t] maps period t+1 -> t+2, 0-based
  DiscreteMeasure terminal;

  PathLaw() = default;
  PathLaw(Grid g, DiscreteMeasure init, std::vector<Matrix> ks);
};

// Per-step cost matrices c_t(xi_t, xi_{t+1}); the path cost is their sum.
struct PairwiseCost {
  std::vector<Matrix> steps;
};

// Unnormalized endpoint measure R(xi_1, xi_T). Entries are max-normalized;
// the factor taken out is kept in log_scale, so R = values * exp(log_scale).
struct EndpointMeasure {
  Grid grid;
  Matrix values;
  double log_scale = 0.0;
};

// R(xi_1, xi_T) = integral of exp(-c/lambda_kl) dF0 over the interior path,
// by forward message passing in the log domain (exact for pairwise costs).
EndpointMeasure auxiliary_endpoint(const PathLaw& f0, const PairwiseCost& cost,
                                   double lambda_kl);

// Static Schroedinger bridge against the unnormalized reference R: two-
// marginal Sinkhorn solve whose value equals the full path problem
// inf E_F[c] + lambda_kl KL(F || F0) over F in Pi(nu1, nuT).
EotSolution static_bridge(const EndpointMeasure& r, const DiscreteMeasure& nu1,
                          const DiscreteMeasure& nuT, double lambda_kl, double tol = 1e-9);

// Worst-case path law from the bridge potentials via backward messages
// beta_t; initial stays nu1 and the terminal reproduces nuT at convergence.
PathLaw reconstruct_path_law(const PathLaw& f0, const PairwiseCost& cost,
                             const Potentials& potentials, double lambda_kl);

struct InitialPerturbedResult {
  double value = 0.0;
  DiscreteMeasure nu_star;
  EotSolution endpoint;
  int iterations = 0;
  double gap = 0.0;
};

// Frank-Wolfe over the initial distribution inside the KL ball of radius
// delta1 around f0's initial; the linear step uses the first bridge potential
// and solves the KL-ball subproblem in closed form (exponential tilt).
InitialPerturbedResult initial_perturbed_bridge(const PathLaw& f0, const PairwiseCost& cost,
                                                double lambda_kl, double delta1,
                                                const DiscreteMeasure& nuT, double tol = 1e-8,
                                                int max_iter = 500);

// Full path tensor of a PathLaw, flat row-major over (xi_1, ..., xi_T).
// Enumeration helper for small instances.
std::vector<double> enumerate_path_tensor(const PathLaw& law);

// KL divergence between two path laws with equal grids and horizons, computed
// step by step without enumerating the path space.
double path_kl(const PathLaw& f, const PathLaw& f0);

// Marginal distribution of xi_{t+1} (0-based t).
DiscreteMeasure path_marginal(const PathLaw& law, std::size_t t);

// E_F[sum_t c_t] under the path law.
double path_expected_cost(const PathLaw& law, const PairwiseCost& cost);

}  // namespace robustdyn
