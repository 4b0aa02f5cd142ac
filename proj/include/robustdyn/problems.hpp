#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "robustdyn/bridge.hpp"
#include "robustdyn/ddc.hpp"
#include "robustdyn/kde.hpp"
#include "robustdyn/sensitivity.hpp"
#include "robustdyn/synth.hpp"

namespace robustdyn {

// --- reference estimation ----------------------------------------------------

// Iterative AR(1) fit for the inclusive-value process: solve the share fixed
// point, recover omegas by nearest-node inversion, refit, repeat.
struct CarReference {
  Ar1Fit ar1;
  MarkovChain chain;
  SharePolicy policy;
  std::vector<double> recovered_omega;
  Coupling f0;             // joint of the fitted chain
  double fixed_point_eps = 0.0;  // KL(F0 || KDE of recovered pairs)
  double vio_ref = 0.0;          // share-matching violation of the reference
  int iterations = 0;
};

CarReference fit_reference_car(const std::vector<double>& observed_s0, double beta,
                               std::size_t n_grid, double width = 3.0,
                               BandwidthRule rule = BandwidthRule::Cv5, double tol = 1e-10,
                               int max_iter = 500);

// Fixed-point fit of the supply-shock AR(1): the stationary moments come from
// the terminal layer, only the autocorrelation iterates.
struct TaxiReference {
  double mu_xi = 0.0, sigma_xi = 0.0, rho = 0.0;
  MarkovChain chain;
  CcpTable ccps;
  std::vector<std::vector<double>> recovered_xi;  // [day][layer]
  Coupling f0;
  double fixed_point_eps = 0.0;
  double vio_ref = 0.0;
  int iterations = 0;
};

TaxiReference fit_reference_taxi(const FiniteHorizonModel& model, std::size_t n_xi,
                                 double width = 3.0,
                                 BandwidthRule rule = BandwidthRule::Scott,
                                 double tol = 1e-8, int max_iter = 200);

// --- anneal problems ----------------------------------------------------------

struct CarProblemOptions {
  std::size_t t1 = 0;
  bool surplus = false;  // consumer surplus instead of elasticity
  double sinkhorn_tol = 1e-8;
  int sinkhorn_max_iter = 50000;
  double share_tol = 1e-10;
  BandwidthRule kde_rule = BandwidthRule::Cv5;
  double lambda_kl_floor = 1e-8;
};

// Infinite-horizon inclusive-value problem: duals are the multiplier g on the
// omega grid plus log lambda_kl; the policy state is the share function.
class CarProblem : public AnnealProblem {
 public:
  CarProblem(InfiniteHorizonModel model, CarReference reference, CarProblemOptions opts);

  std::size_t dual_dim(ProblemMode mode) const override;
  AnnealState reference_state(ProblemMode mode) const override;
  double reference_scalar() const override;
  EvalOutcome evaluate(AnnealState& state, ProblemMode mode, Direction dir) override;
  AnnealState bound_to_robustness(const AnnealState& state) const override;

  const InfiniteHorizonModel& model() const { return model_; }
  const CarReference& reference() const { return ref_; }

 private:
  InfiniteHorizonModel model_;
  CarReference ref_;
  CarProblemOptions opts_;
};

// Raw two-marginal problem built from explicit tensors: scalar term, moment
// terms with targets, and an arbitrary reference coupling.
struct RawEotSpec {
  std::vector<Grid> grids;
  std::vector<double> scalar;  // may be empty (constant scalar = 0)
  MomentSystem moments;        // may be empty
  Coupling f0;
  std::vector<DiscreteMeasure> marginals;
  double lambda_kl_floor = 1e-8;
  double sinkhorn_tol = 1e-9;
};

class RawEotProblem : public AnnealProblem {
 public:
  explicit RawEotProblem(RawEotSpec spec);

  std::size_t dual_dim(ProblemMode mode) const override;
  AnnealState reference_state(ProblemMode mode) const override;
  double reference_scalar() const override;
  EvalOutcome evaluate(AnnealState& state, ProblemMode mode, Direction dir) override;
  AnnealState bound_to_robustness(const AnnealState& state) const override;

 private:
  RawEotSpec spec_;
};

struct TaxiProblemOptions {
  std::size_t hour_index = 0;  // layer for the stop-work elasticity
  bool frisch = false;
  double sinkhorn_tol = 1e-8;
  int sinkhorn_max_iter = 50000;
  BandwidthRule kde_rule = BandwidthRule::Scott;
  double lambda_kl_floor = 1e-8;
};

// Finite-horizon stopping problem: duals are the per-(t,k) multiplier tables
// plus log lambda_kl; the policy state is the flattened CCP stack (two stacks
// for the Frisch variant, base and raised earnings coefficient).
class TaxiProblem : public AnnealProblem {
 public:
  TaxiProblem(FiniteHorizonModel model, TaxiReference reference, TaxiProblemOptions opts);

  std::size_t dual_dim(ProblemMode mode) const override;
  AnnealState reference_state(ProblemMode mode) const override;
  double reference_scalar() const override;
  EvalOutcome evaluate(AnnealState& state, ProblemMode mode, Direction dir) override;
  AnnealState bound_to_robustness(const AnnealState& state) const override;

 private:
  std::size_t g_rows() const;
  CcpTable unpack(const std::vector<double>& policy, std::size_t offset,
                  const FiniteHorizonModel& m) const;
  void pack(const CcpTable& t, std::vector<double>& policy, std::size_t offset) const;

  FiniteHorizonModel model_;
  FiniteHorizonModel model_raised_;  // earnings coefficient up 1% from the start hour
  TaxiReference ref_;
  TaxiProblemOptions opts_;
  std::size_t table_len_ = 0;
};

// Time-inhomogeneous problem over Markov path laws with fixed endpoints: the
// scalar is a pairwise path functional, the dual is log lambda_kl alone.
struct BridgeProblemSpec {
  PathLaw f0;
  PairwiseCost scalar_steps;
  double lambda_kl_floor = 1e-8;
  double bridge_tol = 1e-10;
};

class BridgeProblem : public AnnealProblem {
 public:
  explicit BridgeProblem(BridgeProblemSpec spec);

  std::size_t dual_dim(ProblemMode mode) const override;
  AnnealState reference_state(ProblemMode mode) const override;
  double reference_scalar() const override;
  EvalOutcome evaluate(AnnealState& state, ProblemMode mode, Direction dir) override;
  AnnealState bound_to_robustness(const AnnealState& state) const override;

 private:
  BridgeProblemSpec spec_;
};

}  // namespace robustdyn
