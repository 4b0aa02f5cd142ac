#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "robustdyn/ddc.hpp"
#include "robustdyn/eot.hpp"
#include "robustdyn/measures.hpp"

namespace robustdyn {

struct DualVariables {
  std::vector<double> lambda;  // moment multipliers
  double lambda_kl = 1.0;      // >= 0
  double lambda_s = 0.0;       // >= 0, robustness-metric mode
  double eta = 0.0;            // >= 0, stationary-perturbation mode
};

struct SensitivityConfig {
  std::vector<double> radii;          // defaults to default_radii()
  int mcmc_steps = 5000;              // T
  int opt_steps = 5;                  // J
  double anneal_multiplier = 100.0;   // m
  double violation_threshold = 0.005;
  double penalty = 100.0;
  double prior_sd = 10.0;
  double fixed_point_eps = 0.0;  // eps_T / eps_M
  double moment_eps = 0.0;       // eps_n
  double lambda_kl_floor = 1e-8;
  std::uint64_t seed = 1;
};

// 10^(-3 + 0.25 i) for i = 0..12, then 1e10: 14 radii.
std::vector<double> default_radii();

struct AnnealState {
  std::vector<double> duals;
  std::vector<double> policy;  // problem-specific; may be empty
};

struct BoundRecord {
  double delta = 0.0;
  bool has_lower = false, has_upper = false;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  double kl_lower = std::numeric_limits<double>::quiet_NaN();
  double kl_upper = std::numeric_limits<double>::quiet_NaN();
  bool binding_lower = false, binding_upper = false;
  AnnealState state_lower, state_upper;  // winning chain states for reporting
};

struct BoundCurve {
  double reference = 0.0;
  std::vector<BoundRecord> records;
};

// --- cost assembly and the inner dual --------------------------------------

// Entrywise pieces of the cost on a two-marginal grid pair. Empty vectors
// stand for identically-zero terms (a scalar that does not depend on U).
struct CostParts {
  std::vector<Grid> grids;
  std::vector<double> scalar;
  std::vector<std::vector<double>> moments;
  std::vector<double> structural;
};

// c = s + lambda' m + psi, or lambda' m + lambda_s s + psi in robustness mode
// (where the entropic regularization is fixed at 1).
CostTensor assemble_cost(const CostParts& parts, const DualVariables& duals,
                         bool robustness_mode = false);

// Solves the inner EOT at the given duals and returns the dual objective
// C - lambda_kl delta - lambda' P (robustness mode: C - lambda' P - lambda_s s_bar).
double inner_dual_value(const CostParts& parts, const DualVariables& duals,
                        const std::vector<DiscreteMeasure>& marginals, const Coupling& f0,
                        double delta, const std::vector<double>& targets,
                        bool robustness_mode = false, double s_bar = 0.0,
                        const SinkhornOptions& opts = {});

// --- the annealed minimax driver --------------------------------------------

enum class Direction { Lower, Upper };
enum class ProblemMode { Bound, Robustness };

struct EvalOutcome {
  double scalar = 0.0;
  double kl = 0.0;         // KL(plan || F0)
  double violation = 0.0;  // aggregate violation net of the reference level
  bool ok = true;
  Coupling plan;
};

// A problem the annealer can drive: it owns the model objects, interprets the
// dual vector, solves the inner EOT, and re-solves its structural layer under
// the worst-case distribution (updating `state.policy` in place).
class AnnealProblem {
 public:
  virtual ~AnnealProblem() = default;
  virtual std::size_t dual_dim(ProblemMode mode) const = 0;
  // chain start whose evaluation reproduces the reference distribution
  virtual AnnealState reference_state(ProblemMode mode) const = 0;
  // scalar parameter under F0 itself (the delta = 0 value)
  virtual double reference_scalar() const = 0;
  virtual EvalOutcome evaluate(AnnealState& state, ProblemMode mode, Direction dir) = 0;
  // Bound-mode chain state mapped into the robustness-mode layout: the plan
  // tilt at regularization lambda_kl equals the tilt of the multipliers
  // divided by lambda_kl at regularization one.
  virtual AnnealState bound_to_robustness(const AnnealState& state) const {
    return state;
  }
};

struct AnnealStats {
  long proposals = 0;
  long accepted = 0;
};

// Simulated-annealing MCMC over the duals with adaptive random-walk proposals,
// feasibility penalties, and warm starts pooled across the radius ladder.
BoundCurve anneal_optimize(AnnealProblem& problem, const SensitivityConfig& config,
                           Direction direction, const AnnealState* warm_start = nullptr,
                           AnnealStats* stats = nullptr);

// Merge two single-direction curves over the same radii.
BoundCurve merge_curves(const BoundCurve& lower, const BoundCurve& upper);

// One-sided slopes from the two smallest radii at or above delta0.
struct LocalSensitivity {
  double lower_slope = 0.0;
  double upper_slope = 0.0;
};
LocalSensitivity local_sensitivity(const BoundCurve& curve, double delta0);

struct GlobalBoundParams {
  double lipschitz = 0.0;  // L
  double scale = 0.0;      // C
  int p = 1;
  std::vector<int> dims;   // d_2 .. d_k
};

// (sum d_i) lkl log(1/lkl) + (k-1)^(1/p) L C lkl for lkl in (0,1].
double global_bound(const GlobalBoundParams& params, double lambda_kl);

struct RobustnessResult {
  double delta = std::numeric_limits<double>::infinity();
  bool feasible = false;
  double scalar_at_witness = 0.0;
  AnnealState witness;
};

// Smallest KL deviation at which the scalar can cross s_bar (Lower: fall to
// or below it; Upper: rise to or above it). A warm start (e.g. a bound-curve
// winner already past the threshold) seeds the chain.
RobustnessResult robustness_metric(AnnealProblem& problem, double s_bar, Direction direction,
                                   const SensitivityConfig& config,
                                   const AnnealState* warm_start = nullptr);

// Smallest radius with a nonempty identified set: the robustness chain with
// the threshold constraint removed.
RobustnessResult delta_star(AnnealProblem& problem, const SensitivityConfig& config);

}  // namespace robustdyn
