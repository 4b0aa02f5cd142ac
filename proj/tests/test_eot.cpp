#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "robustdyn/eot.hpp"
#include "robustdyn/measures.hpp"

using namespace robustdyn;

namespace {

const Grid g2({0.0, 1.0});

Coupling product_uniform2() {
  return product_coupling({DiscreteMeasure(g2, {0.5, 0.5}), DiscreteMeasure(g2, {0.5, 0.5})});
}

}  // namespace

TEST_CASE("zero cost gives the product plan with zero value") {
  CostTensor cost({g2, g2}, {0.0, 0.0, 0.0, 0.0});
  DiscreteMeasure m1(g2, {0.3, 0.7}), m2(g2, {0.6, 0.4});
  const EotSolution sol = sinkhorn(cost, {m1, m2}, 1.0);
  CHECK(sol.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sol.plan.at2(0, 0) == doctest::Approx(0.18).epsilon(1e-9));
  CHECK(sol.plan.at2(1, 1) == doctest::Approx(0.28).epsilon(1e-9));
}

TEST_CASE("2x2 oracle equivalence on the checkerboard cost") {
  CostTensor cost({g2, g2}, {0.0, 1.0, 1.0, 0.0});
  DiscreteMeasure u(g2, {0.5, 0.5});
  SinkhornOptions opts;
  opts.tol = 1e-12;
  const EotSolution sol = sinkhorn(cost, {u, u}, 1.0, opts);
  double a_opt = 0.0;
  const double oracle = oracles::eot2x2_value(
      0.5, 0.5, {0.0, 1.0, 1.0, 0.0}, {0.25, 0.25, 0.25, 0.25}, 1.0, &a_opt);
  CHECK(sol.value == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(sol.plan.at2(0, 0) == doctest::Approx(a_opt).epsilon(1e-6));
}

TEST_CASE("huge regularization pushes the plan to the product coupling") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  CostTensor cost({g2, g2}, {uc(gen), uc(gen), uc(gen), uc(gen)});
  DiscreteMeasure m1(g2, {0.4, 0.6}), m2(g2, {0.7, 0.3});
  const EotSolution sol = sinkhorn(cost, {m1, m2}, 1e6);
  const Coupling prod = product_coupling({m1, m2});
  double tv = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    tv += 0.5 * std::abs(sol.plan.tensor[i] - prod.tensor[i]);
  CHECK(tv < 1e-4);
}

TEST_CASE("random 2x2 instances match the brute-force oracle") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> um(0.15, 0.85);
  for (int rep = 0; rep < 60; ++rep) {
    const double p = um(gen), q = um(gen);
    const std::array<double, 4> c{uc(gen), uc(gen), uc(gen), uc(gen)};
    const double lambda = (rep % 3 == 0) ? 0.1 : (rep % 3 == 1 ? 1.0 : 10.0);
    DiscreteMeasure m1(g2, {p, 1.0 - p}), m2(g2, {q, 1.0 - q});
    SinkhornOptions opts;
    opts.tol = 1e-11;
    const EotSolution sol =
        sinkhorn(CostTensor({g2, g2}, {c[0], c[1], c[2], c[3]}), {m1, m2}, lambda, opts);
    const std::array<double, 4> ref{p * q, p * (1.0 - q), (1.0 - p) * q,
                                    (1.0 - p) * (1.0 - q)};
    const double oracle = oracles::eot2x2_value(p, q, c, ref, lambda);
    CHECK(sol.value == doctest::Approx(oracle).epsilon(1e-8));
    // marginal feasibility
    const DiscreteMeasure got1 = marginal(sol.plan, 0);
    CHECK(got1.weights[0] == doctest::Approx(p).epsilon(1e-9));
  }
}

TEST_CASE("value identity and dual evaluation") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  const Grid g3({0.0, 0.5, 1.0});
  std::vector<double> c(9);
  for (double& x : c) x = uc(gen);
  DiscreteMeasure m1(g3, {0.2, 0.5, 0.3}), m2(g3, {0.4, 0.3, 0.3});
  const Coupling prod = product_coupling({m1, m2});
  SinkhornOptions opts;
  opts.tol = 1e-12;
  const EotSolution sol = sinkhorn(CostTensor({g3, g3}, c), {m1, m2}, 0.7, opts);

  SUBCASE("value equals the sum of potential expectations") {
    double lin = 0.0;
    for (int i = 0; i < 2; ++i) {
      const auto& m = i == 0 ? m1 : m2;
      for (std::size_t t = 0; t < 3; ++t) lin += m.weights[t] * sol.potentials.phi[i][t];
    }
    CHECK(sol.value == doctest::Approx(lin).epsilon(1e-12));
  }
  SUBCASE("the gauge splits the value evenly") {
    double e1 = 0.0;
    for (std::size_t t = 0; t < 3; ++t) e1 += m1.weights[t] * sol.potentials.phi[0][t];
    CHECK(e1 == doctest::Approx(sol.value / 2.0).epsilon(1e-10));
  }
  SUBCASE("dual evaluator reproduces the optimum") {
    const double dv = eot_value_dual(sol.potentials, CostTensor({g3, g3}, c), {m1, m2},
                                     prod, 0.7);
    CHECK(dv == doctest::Approx(sol.value).epsilon(1e-8));
  }
  SUBCASE("phi = 0 with zero cost evaluates to zero") {
    Potentials zero;
    zero.phi = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    const double dv = eot_value_dual(zero, CostTensor({g3, g3}, std::vector<double>(9, 0.0)),
                                     {m1, m2}, prod, 0.7);
    CHECK(dv == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("weak duality: random potentials stay below the optimum") {
    std::uniform_real_distribution<double> up(-0.5, 0.5);
    for (int rep = 0; rep < 50; ++rep) {
      Potentials rand_phi;
      rand_phi.phi = {{up(gen), up(gen), up(gen)}, {up(gen), up(gen), up(gen)}};
      const double dv = eot_value_dual(rand_phi, CostTensor({g3, g3}, c), {m1, m2},
                                       prod, 0.7);
      CHECK(dv <= sol.value + 1e-10);
    }
  }
  SUBCASE("primal-dual consistency") {
    const double primal =
        expected_cost(sol.plan, CostTensor({g3, g3}, c)) + 0.7 * kl_divergence(sol.plan, prod);
    CHECK(primal == doctest::Approx(sol.value).epsilon(1e-8));
  }
  SUBCASE("schroedinger equation residual at convergence") {
    // phi_1(u) = -lambda log E_{F2} exp((phi_2 - c)/lambda), checked directly
    for (std::size_t u = 0; u < 3; ++u) {
      double acc = 0.0;
      for (std::size_t v = 0; v < 3; ++v)
        acc += m2.weights[v] * std::exp((sol.potentials.phi[1][v] - c[u * 3 + v]) / 0.7);
      const double rhs = -0.7 * std::log(acc);
      // the gauge shifts both potentials by opposite constants; compare gaps
      const double gap0 = sol.potentials.phi[0][u] - rhs;
      double acc0 = 0.0;
      for (std::size_t v = 0; v < 3; ++v)
        acc0 += m2.weights[v] * std::exp((sol.potentials.phi[1][v] - c[v]) / 0.7);
      const double gap_base = sol.potentials.phi[0][0] + 0.7 * std::log(acc0);
      CHECK(gap0 == doctest::Approx(gap_base).epsilon(1e-9));
    }
  }
}

TEST_CASE("monotone value in the regularization strength") {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  const Grid g3({0.0, 0.5, 1.0});
  std::vector<double> c(9);
  for (double& x : c) x = uc(gen);
  DiscreteMeasure m1(g3, {0.25, 0.5, 0.25}), m2(g3, {0.3, 0.4, 0.3});
  double prev = -1e100;
  for (double lambda : {0.05, 0.1, 0.5, 1.0, 5.0, 25.0}) {
    const EotSolution sol = sinkhorn(CostTensor({g3, g3}, c), {m1, m2}, lambda);
    CHECK(sol.value >= prev - 1e-10);
    prev = sol.value;
  }
}

TEST_CASE("reference absorption") {
  SUBCASE("product reference leaves the cost unchanged") {
    const Coupling prod = product_uniform2();
    CostTensor cost({g2, g2}, {0.3, -0.2, 0.1, 0.4});
    const CostTensor shifted = absorb_reference(cost, prod, 2.0);
    for (int i = 0; i < 4; ++i)
      CHECK(shifted.values[i] == doctest::Approx(cost.values[i]).epsilon(1e-14));
  }
  SUBCASE("absorbed solve equals the direct nonproduct solve") {
    Grid g({-1.0, 1.0});
    Matrix K(2, 2);
    K(0, 0) = 0.9;
    K(0, 1) = 0.1;
    K(1, 0) = 0.1;
    K(1, 1) = 0.9;
    const MarkovChain chain(g, K, DiscreteMeasure(g, {0.5, 0.5}));
    const Coupling f0 = joint_from_chain(chain);
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> uc(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> c(4);
      for (double& x : c) x = uc(gen);
      const double lambda = 0.5 + uc(gen) * 0.4;
      DiscreteMeasure u(g, {0.5, 0.5});
      SinkhornOptions opts;
      opts.tol = 1e-12;
      const CostTensor cost({g, g}, c);
      const EotSolution direct = sinkhorn(cost, {u, u}, lambda, opts, &f0);
      const CostTensor shifted = absorb_reference(cost, f0, lambda);
      const EotSolution via_product = sinkhorn(shifted, {u, u}, lambda, opts);
      CHECK(direct.value == doctest::Approx(via_product.value).epsilon(1e-9));
      for (int i = 0; i < 4; ++i)
        CHECK(direct.plan.tensor[i] ==
              doctest::Approx(via_product.plan.tensor[i]).epsilon(1e-7));
    }
  }
  SUBCASE("zero cost against a reference recovers the reference") {
    Grid g({-1.0, 1.0});
    Matrix K(2, 2);
    K(0, 0) = 0.8;
    K(0, 1) = 0.2;
    K(1, 0) = 0.2;
    K(1, 1) = 0.8;
    const MarkovChain chain(g, K, DiscreteMeasure(g, {0.5, 0.5}));
    const Coupling f0 = joint_from_chain(chain);
    DiscreteMeasure u(g, {0.5, 0.5});
    const EotSolution sol =
        sinkhorn(CostTensor({g, g}, {0.0, 0.0, 0.0, 0.0}), {u, u}, 1.0, {}, &f0);
    CHECK(sol.value == doctest::Approx(0.0).epsilon(1e-10));
    for (int i = 0; i < 4; ++i)
      CHECK(sol.plan.tensor[i] == doctest::Approx(f0.tensor[i]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(absorb_reference(CostTensor({g2, g2}, {0, 0, 0, 0}), product_uniform2(), 0.0),
                  std::invalid_argument);
}

TEST_CASE("three-marginal solve") {
  const Grid g3({0.0, 0.5, 1.0});
  DiscreteMeasure m1(g2, {0.4, 0.6}), m2(g3, {0.3, 0.3, 0.4}), m3(g2, {0.5, 0.5});
  std::mt19937_64 gen(37);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::vector<double> c(12);
  for (double& x : c) x = uc(gen);
  SinkhornOptions opts;
  opts.tol = 1e-11;
  const EotSolution sol = sinkhorn(CostTensor({g2, g3, g2}, c), {m1, m2, m3}, 0.8, opts);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const DiscreteMeasure got = marginal(sol.plan, axis);
    const auto& want = axis == 0 ? m1 : (axis == 1 ? m2 : m3);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got.weights[i] == doctest::Approx(want.weights[i]).epsilon(1e-9));
  }
  // primal-dual consistency in the multimarginal case
  const Coupling prod = product_coupling({m1, m2, m3});
  const double primal = expected_cost(sol.plan, CostTensor({g2, g3, g2}, c)) +
                        0.8 * kl_divergence(sol.plan, prod);
  CHECK(primal == doctest::Approx(sol.value).epsilon(1e-8));
}

TEST_CASE("worst case kernel") {
  SUBCASE("recovers the generating chain") {
    const MarkovChain chain = discretize_ar1(0.0, 0.7, 1.0, 9, 3.0);
    const Coupling j = joint_from_chain(chain);
    const MarkovChain back = worst_case_kernel(j);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t k = 0; k < 9; ++k)
        CHECK(back.kernel(i, k) == doctest::Approx(chain.kernel(i, k)).epsilon(1e-12));
    for (std::size_t i = 0; i < 9; ++i)
      CHECK(back.stationary.weights[i] ==
            doctest::Approx(chain.stationary.weights[i]).epsilon(1e-9));
  }
  SUBCASE("product plan gives iid rows") {
    DiscreteMeasure m(g2, {0.3, 0.7});
    const Coupling prod = product_coupling({m, m});
    const MarkovChain chain = worst_case_kernel(prod);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(chain.kernel(i, 0) == doctest::Approx(0.3));
      CHECK(chain.kernel(i, 1) == doctest::Approx(0.7));
    }
  }
  SUBCASE("solver plans satisfy the chain invariants") {
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> uc(-1.0, 1.0);
    const MarkovChain chain = discretize_ar1(0.0, 0.5, 1.0, 7, 3.0);
    const Coupling f0 = joint_from_chain(chain);
    std::vector<double> c(49);
    for (double& x : c) x = uc(gen);
    SinkhornOptions opts;
    opts.tol = 1e-12;
    const EotSolution sol = sinkhorn(CostTensor({chain.grid, chain.grid}, c),
                                     {chain.stationary, chain.stationary}, 1.0, opts, &f0);
    const MarkovChain worst = worst_case_kernel(sol.plan, &chain);
    // construction succeeded means row-stochasticity and invariance both hold
    CHECK(worst.grid.size() == 7);
  }
}

TEST_CASE("stationary-perturbed eot") {
  const MarkovChain chain = discretize_ar1(0.0, 0.6, 0.8, 7, 3.0);
  const Coupling f0 = joint_from_chain(chain);
  const DiscreteMeasure& nu0 = chain.stationary;
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::vector<double> c(49);
  for (double& x : c) x = uc(gen);
  const CostTensor cost({chain.grid, chain.grid}, c);

  SUBCASE("delta1 = 0 reduces to the plain solve") {
    const EotSolution plain = sinkhorn(cost, {nu0, nu0}, 1.0, {}, &f0);
    const StationaryPerturbedResult r = stationary_perturbed_eot(cost, nu0, f0, 1.0, 0.0);
    CHECK(r.value == doctest::Approx(plain.value).epsilon(1e-8));
    CHECK(std::isinf(r.eta));
  }
  SUBCASE("marginals coincide and the ball constraint holds") {
    for (double delta1 : {0.01, 0.1, 0.5}) {
      const StationaryPerturbedResult r =
          stationary_perturbed_eot(cost, nu0, f0, 1.0, delta1, 1e-10);
      const DiscreteMeasure m0 = marginal(r.plan, 0);
      const DiscreteMeasure m1 = marginal(r.plan, 1);
      for (std::size_t i = 0; i < 7; ++i)
        CHECK(m0.weights[i] == doctest::Approx(m1.weights[i]).epsilon(1e-6));
      CHECK(kl_divergence(r.nu_star, nu0) <= delta1 + 1e-6);
      // a larger ball can only lower the worst-case value
      const EotSolution plain = sinkhorn(cost, {nu0, nu0}, 1.0, {}, &f0);
      CHECK(r.value <= plain.value + 1e-8);
    }
  }
}

TEST_CASE("solver error paths") {
  CostTensor cost({g2, g2}, {0.0, 0.0, 0.0, 0.0});
  DiscreteMeasure m(g2, {0.5, 0.5});
  SinkhornOptions opts;
  opts.tol = 1e-15;
  opts.max_iter = 1;
  // checkerboard cost cannot converge in one sweep at this tolerance
  CostTensor hard({g2, g2}, {0.0, 3.0, 3.0, 0.0});
  CHECK_THROWS_AS(sinkhorn(hard, {m, m}, 0.01, opts), SolverError);
  CHECK_THROWS_AS(sinkhorn(cost, {m, m}, 0.0), std::invalid_argument);
}
