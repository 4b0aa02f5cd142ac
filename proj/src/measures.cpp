#include "robustdyn/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "robustdyn/kernels.hpp"
#include "robustdyn/rng.hpp"

namespace robustdyn {

namespace {

constexpr double kRenormTol = 1e-9;

void normalize_or_throw(std::vector<double>& w, const char* what) {
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative weight");
    total += x;
  }
  if (std::abs(total - 1.0) > kRenormTol)
    throw std::invalid_argument(std::string(what) + ": weights sum to " + std::to_string(total));
  const double inv = 1.0 / total;
  for (double& x : w) x *= inv;
}

}  // namespace

Grid::Grid(std::vector<double> pts) : points(std::move(pts)) {
  if (points.size() < 2) throw std::invalid_argument("Grid: need at least 2 points");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i] > points[i - 1]))
      throw std::invalid_argument("Grid: points must be strictly increasing");
  const double h = points[1] - points[0];
  bool uniform = true;
  for (std::size_t i = 2; i < points.size(); ++i)
    if (std::abs((points[i] - points[i - 1]) - h) > 1e-12 * std::max(1.0, std::abs(h))) {
      uniform = false;
      break;
    }
  step = uniform ? h : 0.0;
}

std::size_t Grid::nearest(double x) const {
  auto it = std::lower_bound(points.begin(), points.end(), x);
  if (it == points.begin()) return 0;
  if (it == points.end()) return points.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - points.begin());
  const std::size_t lo = hi - 1;
  const double dlo = x - points[lo];
  const double dhi = points[hi] - x;
  return dhi < dlo ? hi : lo;  // tie goes to the lower node
}

Grid uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw std::invalid_argument("uniform_grid: need n >= 2");
  if (!(hi > lo)) throw std::invalid_argument("uniform_grid: hi must exceed lo");
  std::vector<double> pts(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) pts[i] = lo + h * static_cast<double>(i);
  return Grid(std::move(pts));
}

DiscreteMeasure::DiscreteMeasure(Grid g, std::vector<double> w)
    : grid(std::move(g)), weights(std::move(w)) {
  if (weights.size() != grid.size())
    throw std::invalid_argument("DiscreteMeasure: weight/grid size mismatch");
  normalize_or_throw(weights, "DiscreteMeasure");
}

double DiscreteMeasure::mean() const {
  return kernels::dot(weights, grid.points);
}

Coupling::Coupling(std::vector<Grid> gs, std::vector<double> t)
    : grids(std::move(gs)), tensor(std::move(t)) {
  if (grids.size() < 2) throw std::invalid_argument("Coupling: arity must be >= 2");
  std::size_t n = 1;
  for (const Grid& g : grids) n *= g.size();
  if (tensor.size() != n) throw std::invalid_argument("Coupling: tensor size mismatch");
  normalize_or_throw(tensor, "Coupling");
}

std::vector<std::size_t> Coupling::dims() const {
  std::vector<std::size_t> d(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) d[i] = grids[i].size();
  return d;
}

MarkovChain::MarkovChain(Grid g, Matrix k, DiscreteMeasure st)
    : grid(std::move(g)), kernel(std::move(k)), stationary(std::move(st)) {
  const std::size_t n = grid.size();
  if (kernel.rows != n || kernel.cols != n)
    throw std::invalid_argument("MarkovChain: kernel must be n x n on the grid");
  if (stationary.size() != n)
    throw std::invalid_argument("MarkovChain: stationary size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(kernel(i, j) >= 0.0))
        throw std::invalid_argument("MarkovChain: negative kernel entry");
      rs += kernel(i, j);
    }
    if (std::abs(rs - 1.0) > kRenormTol)
      throw std::invalid_argument("MarkovChain: kernel row does not sum to 1");
    for (std::size_t j = 0; j < n; ++j) kernel(i, j) /= rs;
  }
  // stationarity check
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += stationary.weights[i] * kernel(i, j);
    if (std::abs(s - stationary.weights[j]) > 1e-10)
      throw std::invalid_argument("MarkovChain: stationary vector is not invariant");
  }
}

double kl_divergence(const DiscreteMeasure& f, const DiscreteMeasure& f0) {
  if (f.size() != f0.size() || !(f.grid == f0.grid))
    throw std::invalid_argument("kl_divergence: measures live on different grids");
  return kernels::kl_sum(f.weights, f0.weights);
}

double kl_divergence(const Coupling& f, const Coupling& f0) {
  if (f.arity() != f0.arity() || f.flat_size() != f0.flat_size())
    throw std::invalid_argument("kl_divergence: couplings have different shapes");
  for (std::size_t i = 0; i < f.arity(); ++i)
    if (!(f.grids[i] == f0.grids[i]))
      throw std::invalid_argument("kl_divergence: couplings live on different grids");
  return kernels::kl_sum(f.tensor, f0.tensor);
}

std::vector<double> stationary_from_kernel(const Matrix& kernel, double tol) {
  const std::size_t n = kernel.rows;
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  for (int iter = 0; iter < 100000; ++iter) {
    double diff = 0.0, total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += pi[i] * kernel(i, j);
      next[j] = s;
      total += s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      next[j] /= total;
      diff = std::max(diff, std::abs(next[j] - pi[j]));
    }
    pi.swap(next);
    if (diff < tol) return pi;
  }
  throw std::runtime_error("stationary_from_kernel: power iteration did not converge");
}

MarkovChain discretize_ar1(double mu, double rho, double sigma, std::size_t n_points,
                           double width) {
  if (std::abs(rho) >= 1.0) throw std::invalid_argument("discretize_ar1: need |rho| < 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("discretize_ar1: need sigma > 0");
  if (n_points < 2) throw std::invalid_argument("discretize_ar1: need n_points >= 2");
  if (!(width > 0.0)) throw std::invalid_argument("discretize_ar1: need width > 0");

  const double mean_unc = mu / (1.0 - rho);
  const double sd_unc = sigma / std::sqrt(1.0 - rho * rho);
  Grid grid = uniform_grid(mean_unc - width * sd_unc, mean_unc + width * sd_unc, n_points);
  const double h = grid.step;

  Matrix K(n_points, n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double cond_mean = mu + rho * grid[i];
    for (std::size_t j = 0; j < n_points; ++j) {
      double lo_cdf = j == 0 ? 0.0 : normal_cdf((grid[j] - h / 2.0 - cond_mean) / sigma);
      double hi_cdf =
          j + 1 == n_points ? 1.0 : normal_cdf((grid[j] + h / 2.0 - cond_mean) / sigma);
      K(i, j) = hi_cdf - lo_cdf;
    }
    double rs = kernels::sum(K.row(i));
    for (std::size_t j = 0; j < n_points; ++j) K(i, j) /= rs;
  }
  std::vector<double> pi = stationary_from_kernel(K, 1e-12);
  return MarkovChain(grid, std::move(K), DiscreteMeasure(grid, std::move(pi)));
}

Coupling product_coupling(const std::vector<DiscreteMeasure>& marginals) {
  if (marginals.size() < 2)
    throw std::invalid_argument("product_coupling: need at least two marginals");
  std::vector<Grid> grids;
  grids.reserve(marginals.size());
  std::size_t n = 1;
  for (const auto& m : marginals) {
    grids.push_back(m.grid);
    n *= m.size();
  }
  std::vector<double> t(n, 1.0);
  std::size_t block = n;
  for (const auto& m : marginals) {
    const std::size_t d = m.size();
    block /= d;
    for (std::size_t idx = 0; idx < n; ++idx) t[idx] *= m.weights[(idx / block) % d];
  }
  return Coupling(std::move(grids), std::move(t));
}

DiscreteMeasure marginal(const Coupling& f, std::size_t axis) {
  if (axis >= f.arity()) throw std::invalid_argument("marginal: axis out of range");
  const auto d = f.dims();
  std::size_t block = 1;
  for (std::size_t i = axis + 1; i < d.size(); ++i) block *= d[i];
  std::vector<double> w(d[axis], 0.0);
  const std::size_t n = f.flat_size();
  for (std::size_t idx = 0; idx < n; ++idx) w[(idx / block) % d[axis]] += f.tensor[idx];
  return DiscreteMeasure(f.grids[axis], std::move(w));
}

Coupling joint_from_chain(const MarkovChain& chain) {
  const std::size_t n = chain.grid.size();
  std::vector<double> t(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      t[i * n + j] = chain.stationary.weights[i] * chain.kernel(i, j);
  return Coupling({chain.grid, chain.grid}, std::move(t));
}

}  // namespace robustdyn
