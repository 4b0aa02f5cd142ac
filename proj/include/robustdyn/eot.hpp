#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "robustdyn/measures.hpp"

namespace robustdyn {

// Thrown by iterative solvers; carries the last residual.
struct SolverError : std::runtime_error {
  double residual;
  SolverError(const std::string& msg, double res) : std::runtime_error(msg), residual(res) {}
};

// Cost function tabulated on a product grid, flat row-major. +inf marks cells
// excluded from the support; -inf and NaN are rejected.
struct CostTensor {
  std::vector<Grid> grids;
  std::vector<double> values;

  CostTensor() = default;
  CostTensor(std::vector<Grid> gs, std::vector<double> v);

  std::size_t arity() const { return grids.size(); }
  std::vector<std::size_t> dims() const;
};

// Dual potentials, one vector per marginal. Bins with zero marginal weight
// hold -inf so the implied plan vanishes there.
struct Potentials {
  std::vector<std::vector<double>> phi;
};

struct EotSolution {
  Potentials potentials;
  Coupling plan;
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 100000;
};

// rho = log(dF_otimes / dF0) on f0's product grid; the returned cost is
// cost + lambda_kl * rho, so solving against the product of f0's marginals
// reproduces the solve against f0 itself.
CostTensor absorb_reference(const CostTensor& cost, const Coupling& f0, double lambda_kl);

// Log-domain multimarginal Sinkhorn with max-shift stabilization. The
// reference defaults to the product of the marginals; passing `reference`
// solves against an arbitrary coupling on the same grids. Stops once the
// sup-norm change of every potential is below tol and every plan marginal is
// within 10*tol of its target.
EotSolution sinkhorn(const CostTensor& cost, const std::vector<DiscreteMeasure>& marginals,
                     double lambda_kl, const SinkhornOptions& opts = {},
                     const Coupling* reference = nullptr);

// Dual objective at arbitrary potentials; equals EotSolution::value at the
// Sinkhorn optimum.
double eot_value_dual(const Potentials& potentials, const CostTensor& cost,
                      const std::vector<DiscreteMeasure>& marginals, const Coupling& f0,
                      double lambda_kl);

struct StationaryPerturbedResult {
  double value = 0.0;
  Coupling plan;
  DiscreteMeasure nu_star;
  double eta = 0.0;  // KL-ball multiplier; +inf when delta1 == 0
  int iterations = 0;
};

// Worst case over couplings in Pi(nu, nu) with the common marginal itself
// perturbed inside a KL ball of radius delta1 around nu0. Alternates
// Sinkhorn-style potential updates with a golden-section search over the
// ball multiplier eta on a log-spaced bracket [1e-6, 1e6].
StationaryPerturbedResult stationary_perturbed_eot(const CostTensor& cost,
                                                   const DiscreteMeasure& nu0,
                                                   const Coupling& f0, double lambda_kl,
                                                   double delta1, double tol = 1e-9);

// kernel[i][j] = plan[i][j] / marginal0[i]; rows with no mass fall back to the
// reference kernel's row when given, otherwise to the stationary weights.
MarkovChain worst_case_kernel(const Coupling& plan, const MarkovChain* reference = nullptr);

// E_plan[cost] skipping zero-mass cells (so excluded +inf cells contribute 0).
double expected_cost(const Coupling& plan, const CostTensor& cost);

}  // namespace robustdyn
