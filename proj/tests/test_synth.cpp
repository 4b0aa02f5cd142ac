#include <doctest.h>

#include <cmath>

#include "robustdyn/problems.hpp"
#include "robustdyn/rng.hpp"
#include "robustdyn/synth.hpp"

using namespace robustdyn;

TEST_CASE("refit ar1") {
  SUBCASE("deterministic recursion recovers exact parameters") {
    std::vector<double> xs{1.0};
    for (int t = 0; t < 20; ++t) xs.push_back(0.5 * xs.back());
    const Ar1Fit fit = refit_ar1(xs);
    CHECK(fit.slope == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fit.sigma == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("long series recovers the slope") {
    Rng rng(42);
    std::vector<double> xs{0.0};
    for (int t = 0; t < 100000; ++t) xs.push_back(0.8 * xs.back() + rng.normal());
    const Ar1Fit fit = refit_ar1(xs);
    CHECK(std::abs(fit.slope - 0.8) < 0.01);
    CHECK(std::abs(fit.sigma - 1.0) < 0.01);
  }
  SUBCASE("constant series is rejected") {
    CHECK_THROWS(refit_ar1(std::vector<double>(10, 3.0)));
  }
}

TEST_CASE("car panel generation") {
  SynthCarSpec spec;
  spec.periods = 60;
  spec.gamma1 = 0.7;
  spec.sigma = 0.4;
  spec.n_grid = 51;
  spec.seed = 11;

  SUBCASE("deterministic across runs") {
    const CarPanel a = gen_car_panel(spec);
    const CarPanel b = gen_car_panel(spec);
    REQUIRE(a.observed_s0.size() == b.observed_s0.size());
    for (std::size_t t = 0; t < a.observed_s0.size(); ++t)
      CHECK(a.observed_s0[t] == b.observed_s0[t]);
  }
  SUBCASE("observed shares are on the true policy") {
    const CarPanel p = gen_car_panel(spec);
    for (std::size_t t = 0; t < p.observed_s0.size(); ++t) {
      const std::size_t node = p.true_chain.grid.nearest(p.true_omega[t]);
      CHECK(p.observed_s0[t] == p.true_policy.s0[node]);
    }
  }
  SUBCASE("round trip: refit recovers the generating slope") {
    SynthCarSpec longer = spec;
    longer.periods = 4000;
    const CarPanel p = gen_car_panel(longer);
    const Ar1Fit fit = refit_ar1(p.true_omega);  // snapped path
    CHECK(std::abs(fit.slope - 0.7) < 0.05);
  }
  SUBCASE("iid spec gives serially uncorrelated recovered path") {
    SynthCarSpec iid = spec;
    iid.gamma1 = 0.0;
    iid.periods = 2000;
    const CarPanel p = gen_car_panel(iid);
    const Ar1Fit fit = refit_ar1(p.true_omega);
    CHECK(std::abs(fit.slope) < 3.0 / std::sqrt(2000.0));
  }
}

TEST_CASE("reference fit closes the car loop") {
  SynthCarSpec spec;
  spec.periods = 80;
  spec.gamma0 = 0.1;
  spec.gamma1 = 0.75;
  spec.sigma = 0.35;
  spec.n_grid = 51;
  spec.seed = 5;
  const CarPanel p = gen_car_panel(spec);
  const CarReference ref = fit_reference_car(p.observed_s0, spec.beta, spec.n_grid);
  CHECK(std::abs(ref.ar1.slope - spec.gamma1) < 0.15);
  CHECK(ref.fixed_point_eps > 0.0);
  // reference elasticity close to the truth at every period
  InfiniteHorizonModel truth_model = car_model_from_panel(spec, p, p.true_chain);
  InfiniteHorizonModel fit_model = car_model_from_panel(spec, p, ref.chain);
  const double el_true = industry_elasticity(p.true_policy, truth_model, 40);
  const double el_fit = industry_elasticity(ref.policy, fit_model, 40);
  CHECK(std::abs(el_fit - el_true) / std::abs(el_true) < 0.05);
}

TEST_CASE("taxi panel generation") {
  SynthTaxiSpec spec;
  spec.first_hour = 8;
  spec.last_hour = 13;
  spec.n_xi = 15;
  spec.days = 25;
  spec.rho = 0.55;
  spec.sigma = 0.3;
  spec.seed = 7;

  SUBCASE("deterministic across runs") {
    const TaxiPanel a = gen_taxi_panel(spec);
    const TaxiPanel b = gen_taxi_panel(spec);
    for (std::size_t m = 0; m < spec.days; ++m)
      for (std::size_t t = 0; t < a.model.horizon(); ++t)
        CHECK(a.true_xi[m][t] == b.true_xi[m][t]);
  }
  SUBCASE("beta = 0 panel has static-logit observed ccps") {
    SynthTaxiSpec stat = spec;
    stat.beta = 0.0;
    const TaxiPanel p = gen_taxi_panel(stat);
    for (std::size_t t = 0; t < p.model.horizon(); ++t)
      for (std::size_t ki = 0; ki < p.model.k_sets[t].size(); ++ki) {
        if (p.model.counts[0][t][ki] <= 0.0) continue;
        const int k = p.model.k_sets[t][ki];
        const double u = p.model.utility(t, k, p.model.w_grid[p.model.w_bin[0][t]]) +
                         p.true_xi[0][t];
        CHECK(p.model.observed_ccp[0][t][ki] ==
              doctest::Approx(1.0 / (1.0 + std::exp(u))).epsilon(5e-3));
      }
  }
  SUBCASE("xi recovery round-trips the true path") {
    const TaxiPanel p = gen_taxi_panel(spec);
    for (std::size_t m = 0; m < 5; ++m)
      for (std::size_t t = 0; t < p.model.horizon(); ++t) {
        const XiRecovery rec = recover_xi(p.true_ccps, p.model, m, t);
        CHECK(!rec.clamped);
        CHECK(rec.xi == doctest::Approx(p.true_xi[m][t]).epsilon(1e-7));
      }
  }
  SUBCASE("eccp on the noiseless panel recovers theta") {
    SynthTaxiSpec clean = spec;
    clean.sigma = 0.0;  // xi identically at the stationary mean
    clean.mu = 0.0;
    const TaxiPanel p = gen_taxi_panel(clean);
    const EccpFit fit = eccp_first_stage(p.eccp);
    for (int a = 0; a < 4; ++a)
      CHECK(fit.theta[a] == doctest::Approx(clean.theta[a]).epsilon(1e-7));
  }
}

TEST_CASE("taxi reference fit recovers the autocorrelation") {
  SynthTaxiSpec spec;
  spec.first_hour = 8;
  spec.last_hour = 13;
  spec.n_xi = 31;
  spec.days = 60;
  spec.rho = 0.6;
  spec.sigma = 0.3;
  spec.seed = 3;
  const TaxiPanel p = gen_taxi_panel(spec);
  const TaxiReference ref = fit_reference_taxi(p.model, spec.n_xi);
  CHECK(std::abs(ref.rho - spec.rho) < 0.15);
  CHECK(std::abs(ref.mu_xi - 0.0) < 0.1);
  CHECK(std::abs(ref.sigma_xi - spec.sigma / std::sqrt(1.0 - 0.36)) < 0.08);
}
