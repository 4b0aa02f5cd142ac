#include "robustdyn/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "robustdyn/rng.hpp"

namespace robustdyn {

CarPanel gen_car_panel(const SynthCarSpec& spec) {
  if (std::abs(spec.gamma1) >= 1.0) throw std::invalid_argument("gen_car_panel: |gamma1| >= 1");
  if (!(spec.sigma > 0.0)) throw std::invalid_argument("gen_car_panel: sigma <= 0");

  // simulate the continuous inclusive-value path once
  Rng rng = Rng::substream(spec.seed, 0);
  const double mean0 = spec.gamma0 / (1.0 - spec.gamma1);
  const double sd0 = spec.sigma / std::sqrt(1.0 - spec.gamma1 * spec.gamma1);
  std::vector<double> path(spec.periods);
  double omega = rng.normal(mean0, sd0);
  for (std::size_t t = 0; t < spec.periods; ++t) {
    path[t] = omega;
    omega = spec.gamma0 + spec.gamma1 * omega + rng.normal(0.0, spec.sigma);
  }

  // Drive the generating parameters to a fixed point of the snap-and-refit
  // map (over a fixed path) so the emitted panel is exactly representable on
  // its own grid: the reference-fit loop downstream can then reproduce the
  // generating model instead of chasing a quantization-shifted neighbor.
  double g0 = spec.gamma0, g1 = spec.gamma1, sg = spec.sigma;
  CarPanel panel;
  for (int it = 0; it < 200; ++it) {
    panel.true_chain = discretize_ar1(g0, g1, sg, spec.n_grid, spec.grid_width);
    panel.true_omega.clear();
    for (double x : path)
      panel.true_omega.push_back(panel.true_chain.grid[panel.true_chain.grid.nearest(x)]);
    const Ar1Fit fit = refit_ar1(panel.true_omega);
    const double change = std::abs(fit.intercept - g0) + std::abs(fit.slope - g1) +
                          std::abs(fit.sigma - sg);
    g0 = fit.intercept;
    g1 = std::clamp(fit.slope, -0.99, 0.99);
    sg = std::max(fit.sigma, 1e-6);
    if (change < 1e-13) break;
  }
  panel.true_chain = discretize_ar1(g0, g1, sg, spec.n_grid, spec.grid_width);

  InfiniteHorizonModel model;
  model.beta = spec.beta;
  model.chain = panel.true_chain;
  panel.true_policy = solve_share_fixed_point(model, panel.true_chain, 1e-13);

  for (std::size_t t = 0; t < spec.periods; ++t) {
    const std::size_t node = panel.true_chain.grid.nearest(panel.true_omega[t]);
    double share = panel.true_policy.s0[node];
    if (spec.noise_market_size > 0.0) {
      const double sd = 1.0 / std::sqrt(spec.noise_market_size * share * (1.0 - share));
      const double zn = std::log(share / (1.0 - share)) + rng.normal(0.0, sd);
      share = 1.0 / (1.0 + std::exp(-zn));
    }
    panel.observed_s0.push_back(share);
  }
  return panel;
}

InfiniteHorizonModel car_model_from_panel(const SynthCarSpec& spec, const CarPanel& panel,
                                          const MarkovChain& chain) {
  InfiniteHorizonModel model;
  model.beta = spec.beta;
  model.chain = chain;
  model.observed_s0 = panel.observed_s0;
  model.period_offsets.assign(panel.observed_s0.size(), spec.offset);
  model.alpha = spec.alpha;
  model.market_size.assign(panel.observed_s0.size(), spec.market_size);
  model.ev_conditional_shares.assign(panel.observed_s0.size(), spec.ev_conditional_share);
  return model;
}

TaxiPanel gen_taxi_panel(const SynthTaxiSpec& spec) {
  if (spec.last_hour <= spec.first_hour)
    throw std::invalid_argument("gen_taxi_panel: empty hour range");
  const std::size_t T = static_cast<std::size_t>(spec.last_hour - spec.first_hour) + 1;

  TaxiPanel panel;
  FiniteHorizonModel& m = panel.model;
  m.beta = spec.beta;
  m.theta = spec.theta;
  m.frisch_start_hour = spec.frisch_start_hour;
  m.xi_chain = discretize_ar1(spec.mu, spec.rho, std::max(spec.sigma, 1e-30), spec.n_xi,
                              spec.xi_width);

  // earnings bins from a discretized log-earnings AR(1)
  const MarkovChain logw =
      discretize_ar1(spec.w_log_mean * (1.0 - spec.w_log_rho), spec.w_log_rho,
                     spec.w_log_sigma, spec.n_w, 2.0);
  std::vector<double> wpts(spec.n_w);
  for (std::size_t i = 0; i < spec.n_w; ++i) wpts[i] = std::exp(logw.grid[i]);
  m.w_grid = Grid(wpts);
  m.w_kernel = logw.kernel;

  for (std::size_t t = 0; t < T; ++t) {
    m.hours.push_back(spec.first_hour + static_cast<int>(t));
    std::vector<int> ks;
    for (std::size_t c = 0; c < spec.cohorts + t; ++c) ks.push_back(static_cast<int>(c) + 1);
    m.k_sets.push_back(std::move(ks));
  }

  panel.true_ccps = solve_finite_horizon(m, m.xi_chain);
  const Grid& xg = m.xi_chain.grid;

  const std::size_t days = spec.days;
  m.w_bin.assign(days, std::vector<std::size_t>(T, 0));
  m.counts.assign(days, {});
  m.observed_ccp.assign(days, {});
  panel.true_xi.assign(days, std::vector<double>(T, 0.0));

  // previous-day earnings for the instrument
  std::vector<std::vector<std::size_t>> wlag_bin(days, std::vector<std::size_t>(T, 0));

  const double stat_mean = spec.mu / (1.0 - spec.rho);
  const double stat_sd = spec.sigma / std::sqrt(1.0 - spec.rho * spec.rho);

  for (std::size_t day = 0; day < days; ++day) {
    Rng rng = Rng::substream(spec.seed, day + 1);
    // day's w path plus an extra path standing in for the previous day
    for (int rep = 0; rep < 2; ++rep) {
      std::size_t bin = 0;
      {
        const double u = rng.uniform01();
        double acc = 0.0;
        for (std::size_t b = 0; b < spec.n_w; ++b) {
          acc += logw.stationary.weights[b];
          if (u <= acc) {
            bin = b;
            break;
          }
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        (rep == 0 ? wlag_bin : m.w_bin)[day][t] = bin;
        const double u = rng.uniform01();
        double acc = 0.0;
        for (std::size_t b = 0; b < spec.n_w; ++b) {
          acc += logw.kernel(bin, b);
          if (u <= acc) {
            bin = b;
            break;
          }
        }
      }
    }
    double xi = spec.sigma > 0.0 ? rng.normal(stat_mean, stat_sd) : stat_mean;
    for (std::size_t t = 0; t < T; ++t) {
      panel.true_xi[day][t] = xi;
      xi = spec.mu + spec.rho * xi + (spec.sigma > 0.0 ? rng.normal(0.0, spec.sigma) : 0.0);
    }

    // cohort sizes evolve by survival; exact probabilities unless sampling noise is on
    m.counts[day].assign(T, {});
    m.observed_ccp[day].assign(T, {});
    std::vector<double> cohort(spec.cohorts,
                               spec.drivers_per_cohort > 0
                                   ? static_cast<double>(spec.drivers_per_cohort)
                                   : 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t nk = m.k_sets[t].size();
      m.counts[day][t].assign(nk, 0.0);
      m.observed_ccp[day][t].assign(nk, 0.0);
      const std::size_t wbin = m.w_bin[day][t];
      for (std::size_t ki = 0; ki < nk; ++ki)
        m.observed_ccp[day][t][ki] =
            panel.true_ccps.interp(xg, t, ki, wbin, panel.true_xi[day][t]);
      for (std::size_t c = 0; c < spec.cohorts; ++c) {
        const int k = static_cast<int>(c + 1 + t);
        const std::size_t ki = panel.true_ccps.k_index(t, k);
        m.counts[day][t][ki] = cohort[c];
        double stop_prob = m.observed_ccp[day][t][ki];
        if (spec.drivers_per_cohort > 0) {
          // binomial stopping
          double stopped = 0.0;
          const std::size_t alive = static_cast<std::size_t>(std::lround(cohort[c]));
          for (std::size_t d = 0; d < alive; ++d)
            if (rng.uniform01() < stop_prob) stopped += 1.0;
          if (alive > 0) m.observed_ccp[day][t][ki] = stopped / static_cast<double>(alive);
          cohort[c] -= stopped;
        } else {
          cohort[c] *= 1.0 - stop_prob;
        }
      }
    }
  }

  // ECCP rows: one per (day, layer < T-1, cohort cell with mass)
  panel.eccp.beta = spec.beta;
  for (std::size_t day = 0; day < days; ++day) {
    for (std::size_t t = 0; t + 1 < T; ++t) {
      for (std::size_t ki = 0; ki < m.k_sets[t].size(); ++ki) {
        if (m.counts[day][t][ki] <= 0.0) continue;
        const int k = m.k_sets[t][ki];
        EccpRow row;
        row.phat_t = m.observed_ccp[day][t][ki];
        row.k = static_cast<double>(k);
        row.w = m.w_grid[m.w_bin[day][t]];
        row.w_lag = m.w_grid[wlag_bin[day][t]];
        row.cluster = static_cast<int>(day);
        const std::size_t ki_next = panel.true_ccps.k_index(t + 1, k + 1);
        if (spec.population_eccp) {
          // conditional mean of log p_{t+1} given (w_t, xi_t true)
          const std::size_t wbin = m.w_bin[day][t];
          const Matrix& lp = panel.true_ccps.log_p[t + 1][ki_next];
          // interpolate E over xi' at the continuous xi_t via kernel rows
          const double xi_t = panel.true_xi[day][t];
          const auto& pts = xg.points;
          std::size_t lo = 0, hi = pts.size() - 1;
          double frac = 0.0;
          if (xi_t <= pts.front()) {
            hi = 0;
          } else if (xi_t >= pts.back()) {
            lo = hi;
          } else {
            while (hi - lo > 1) {
              const std::size_t mid = (lo + hi) / 2;
              (pts[mid] <= xi_t ? lo : hi) = mid;
            }
            frac = (xi_t - pts[lo]) / (pts[hi] - pts[lo]);
          }
          double elog = 0.0;
          for (std::size_t xp = 0; xp < pts.size(); ++xp) {
            const double kxp = (1.0 - frac) * m.xi_chain.kernel(lo, xp) +
                               frac * m.xi_chain.kernel(hi, xp);
            double acc = 0.0;
            for (std::size_t wp = 0; wp < spec.n_w; ++wp)
              acc += m.w_kernel(wbin, wp) * lp(wp, xp);
            elog += kxp * acc;
          }
          row.phat_next = std::exp(elog);
        } else {
          row.phat_next = m.observed_ccp[day][t + 1][ki_next] > 0.0
                              ? m.observed_ccp[day][t + 1][ki_next]
                              : panel.true_ccps.interp(xg, t + 1, ki_next,
                                                       m.w_bin[day][t + 1],
                                                       panel.true_xi[day][t + 1]);
        }
        if (row.phat_t <= 0.0 || row.phat_t >= 1.0 || row.phat_next <= 0.0) continue;
        panel.eccp.rows.push_back(row);
      }
    }
  }
  return panel;
}

Ar1Fit refit_ar1(const std::vector<double>& series) {
  if (series.size() < 3) throw std::invalid_argument("refit_ar1: need at least 3 points");
  const std::size_t n = series.size() - 1;
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    mx += series[t];
    my += series[t + 1];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sxx += (series[t] - mx) * (series[t] - mx);
    sxy += (series[t] - mx) * (series[t + 1] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("refit_ar1: series has zero variance");
  Ar1Fit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double e = series[t + 1] - fit.intercept - fit.slope * series[t];
    ssr += e * e;
  }
  fit.sigma = std::sqrt(ssr / static_cast<double>(n));
  return fit;
}

}  // namespace robustdyn
