#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "robustdyn/matrix.hpp"

namespace robustdyn {

// Ordered real grid. Uniform grids record their spacing; `step` is 0 when the
// spacing is irregular.
struct Grid {
  std::vector<double> points;
  double step = 0.0;

  Grid() = default;
  explicit Grid(std::vector<double> pts);

  std::size_t size() const { return points.size(); }
  double operator[](std::size_t i) const { return points[i]; }
  bool operator==(const Grid& o) const { return points == o.points; }

  // index of the node nearest to x; exact ties resolve to the lower node
  std::size_t nearest(double x) const;
};

Grid uniform_grid(double lo, double hi, std::size_t n);

// Probability vector on a grid. Weight sums within 1e-9 of one are
// renormalized; larger deviations are treated as bugs and rejected.
struct DiscreteMeasure {
  Grid grid;
  std::vector<double> weights;

  DiscreteMeasure() = default;
  DiscreteMeasure(Grid g, std::vector<double> w);

  std::size_t size() const { return weights.size(); }
  double mean() const;
};

// Joint probability tensor over the product of k >= 2 grids, stored flat in
// row-major order (last axis fastest).
struct Coupling {
  std::vector<Grid> grids;
  std::vector<double> tensor;

  Coupling() = default;
  Coupling(std::vector<Grid> gs, std::vector<double> t);

  std::size_t arity() const { return grids.size(); }
  std::vector<std::size_t> dims() const;
  std::size_t flat_size() const { return tensor.size(); }

  // k = 2 convenience accessors
  double at2(std::size_t i, std::size_t j) const { return tensor[i * grids[1].size() + j]; }
  double& at2(std::size_t i, std::size_t j) { return tensor[i * grids[1].size() + j]; }
};

struct MarkovChain {
  Grid grid;
  Matrix kernel;  // row-stochastic, rows index the current state
  DiscreteMeasure stationary;

  MarkovChain() = default;
  MarkovChain(Grid g, Matrix k, DiscreteMeasure st);
};

double kl_divergence(const DiscreteMeasure& f, const DiscreteMeasure& f0);
double kl_divergence(const Coupling& f, const Coupling& f0);

// Tauchen discretization of x' = mu + rho x + N(0, sigma^2). The grid spans
// `width` unconditional standard deviations around the unconditional mean;
// the stationary distribution comes from power iteration on the kernel.
MarkovChain discretize_ar1(double mu, double rho, double sigma, std::size_t n_points,
                           double width = 3.0);

Coupling product_coupling(const std::vector<DiscreteMeasure>& marginals);

DiscreteMeasure marginal(const Coupling& f, std::size_t axis);

// dF(x, x') = stationary(x) kernel(x, x')
Coupling joint_from_chain(const MarkovChain& chain);

// Left fixed vector of a row-stochastic matrix, power iteration to `tol`.
std::vector<double> stationary_from_kernel(const Matrix& kernel, double tol = 1e-12);

}  // namespace robustdyn
