#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "robustdyn/ddc.hpp"
#include "robustdyn/measures.hpp"

namespace robustdyn {

struct SynthCarSpec {
  std::size_t periods = 48;
  double gamma0 = 0.0;  // omega' = gamma0 + gamma1 omega + N(0, sigma^2)
  double gamma1 = 0.8;
  double sigma = 0.3;
  double beta = 0.975;
  double alpha = -0.178;
  std::size_t n_grid = 51;
  double grid_width = 3.0;
  double offset = -0.05;  // counterfactual omega shift applied to every period
  double market_size = 1e6;
  double ev_conditional_share = 0.3;
  double noise_market_size = 0.0;  // > 0 turns on logit sampling noise
  std::uint64_t seed = 1;
};

struct CarPanel {
  std::vector<double> observed_s0;
  std::vector<double> true_omega;  // snapped to the generating grid
  SharePolicy true_policy;
  MarkovChain true_chain;
};

// Simulates the omega AR(1), snaps it to the generating grid, solves the true
// share policy and reports the implied observed shares.
CarPanel gen_car_panel(const SynthCarSpec& spec);

// InfiniteHorizonModel wired to a panel and a (fitted or true) chain.
InfiniteHorizonModel car_model_from_panel(const SynthCarSpec& spec, const CarPanel& panel,
                                          const MarkovChain& chain);

struct SynthTaxiSpec {
  int first_hour = 8;
  int last_hour = 16;
  std::array<double, 4> theta{-2.0, 0.4, -0.03, 0.05};
  double mu = 0.0;  // xi' = mu + rho xi + N(0, sigma^2)
  double rho = 0.6;
  double sigma = 0.25;
  double beta = 0.999999;
  std::size_t n_xi = 25;
  double xi_width = 3.0;
  std::size_t n_w = 4;
  double w_log_mean = 3.4;  // log-earnings AR(1), then binned
  double w_log_rho = 0.5;
  double w_log_sigma = 0.08;
  std::size_t cohorts = 3;  // staggered start times -> k values at the first hour
  std::size_t drivers_per_cohort = 0;  // 0: exact probabilities (no sampling noise)
  std::size_t days = 40;
  int frisch_start_hour = 11;
  bool population_eccp = true;  // next-period CCP term set to its conditional mean
  std::uint64_t seed = 1;
};

struct TaxiPanel {
  FiniteHorizonModel model;  // observed blocks filled in
  std::vector<std::vector<double>> true_xi;  // [day][layer]
  CcpTable true_ccps;
  EccpPanel eccp;
};

TaxiPanel gen_taxi_panel(const SynthTaxiSpec& spec);

struct Ar1Fit {
  double intercept = 0.0;
  double slope = 0.0;
  double sigma = 0.0;
};

// OLS of x_t on (1, x_{t-1}); sigma from the ML residual variance.
Ar1Fit refit_ar1(const std::vector<double>& series);

}  // namespace robustdyn
