#include "robustdyn/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "robustdyn/kernels.hpp"
#include "robustdyn/rng.hpp"

namespace robustdyn {

std::vector<double> default_radii() {
  std::vector<double> r;
  for (int i = 0; i <= 12; ++i) r.push_back(std::pow(10.0, -3.0 + 0.25 * i));
  r.push_back(1e10);
  return r;
}

CostTensor assemble_cost(const CostParts& parts, const DualVariables& duals,
                         bool robustness_mode) {
  std::size_t total = 1;
  for (const Grid& g : parts.grids) total *= g.size();
  if (!parts.scalar.empty() && parts.scalar.size() != total)
    throw std::invalid_argument("assemble_cost: scalar term shape mismatch");
  if (!parts.structural.empty() && parts.structural.size() != total)
    throw std::invalid_argument("assemble_cost: structural term shape mismatch");
  if (parts.moments.size() != duals.lambda.size())
    throw std::invalid_argument("assemble_cost: moment multiplier count mismatch");

  std::vector<double> c(total, 0.0);
  const double s_coef = robustness_mode ? duals.lambda_s : 1.0;
  if (!parts.scalar.empty())
    for (std::size_t i = 0; i < total; ++i) c[i] += s_coef * parts.scalar[i];
  for (std::size_t r = 0; r < parts.moments.size(); ++r) {
    if (parts.moments[r].size() != total)
      throw std::invalid_argument("assemble_cost: moment term shape mismatch");
    for (std::size_t i = 0; i < total; ++i) c[i] += duals.lambda[r] * parts.moments[r][i];
  }
  if (!parts.structural.empty())
    for (std::size_t i = 0; i < total; ++i) c[i] += parts.structural[i];
  return CostTensor(parts.grids, std::move(c));
}

double inner_dual_value(const CostParts& parts, const DualVariables& duals,
                        const std::vector<DiscreteMeasure>& marginals, const Coupling& f0,
                        double delta, const std::vector<double>& targets,
                        bool robustness_mode, double s_bar, const SinkhornOptions& opts) {
  const CostTensor cost = assemble_cost(parts, duals, robustness_mode);
  const double reg = robustness_mode ? 1.0 : duals.lambda_kl;
  const EotSolution sol = sinkhorn(cost, marginals, reg, opts, &f0);
  double value = sol.value;
  for (std::size_t r = 0; r < duals.lambda.size(); ++r)
    value -= duals.lambda[r] * targets[r];
  if (robustness_mode)
    value -= duals.lambda_s * s_bar;
  else
    value -= duals.lambda_kl * delta;
  return value;
}

namespace {

struct ChainScratch {
  std::vector<double> scale;      // per-coordinate proposal sd
  double global = 0.1;            // global proposal multiplier
  double sd_cap = 1e9;            // proposals never exceed the prior scale
  std::vector<double> run_mean, run_var;
  long n_seen = 0;

  ChainScratch(std::size_t d, double cap)
      : scale(d, 1.0), sd_cap(cap), run_mean(d, 0.0), run_var(d, 1.0) {}

  void observe(const std::vector<double>& x) {
    ++n_seen;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - run_mean[i];
      run_mean[i] += d / static_cast<double>(n_seen);
      run_var[i] += (d * (x[i] - run_mean[i]) - run_var[i]) / static_cast<double>(n_seen);
    }
  }

  void adapt(int t, bool accepted) {
    const double step = std::pow(static_cast<double>(t + 1), -0.6);
    global *= std::exp(step * ((accepted ? 1.0 : 0.0) - 0.234));
    global = std::clamp(global, 1e-6, 1e3);
  }

  double sd(std::size_t i) const {
    return std::min(global * std::sqrt(std::max(run_var[i], 1e-12)), sd_cap);
  }
};

double log_prior(const std::vector<double>& duals, double prior_sd) {
  double ss = 0.0;
  for (double d : duals) ss += d * d;
  return -0.5 * ss / (prior_sd * prior_sd);
}

struct BestPoint {
  bool found = false;
  double scalar = 0.0;  // raw (unsigned) scalar
  double kl = 0.0;
  AnnealState state;
};

double temperature(int j, const SensitivityConfig& cfg) {
  return 10.0 * (1.0 + (j - 1) * (cfg.anneal_multiplier - 1.0)) /
         (static_cast<double>(cfg.mcmc_steps) - 1.0);
}

}  // namespace

BoundCurve anneal_optimize(AnnealProblem& problem, const SensitivityConfig& config,
                           Direction direction, const AnnealState* warm_start,
                           AnnealStats* stats) {
  SensitivityConfig cfg = config;
  if (cfg.radii.empty()) cfg.radii = default_radii();
  const double sign = direction == Direction::Lower ? 1.0 : -1.0;

  AnnealState ref_state = problem.reference_state(ProblemMode::Bound);
  AnnealState ref_eval = ref_state;
  const EvalOutcome ref_out = problem.evaluate(ref_eval, ProblemMode::Bound, direction);

  BoundCurve curve;
  curve.reference = problem.reference_scalar();
  curve.records.resize(cfg.radii.size());

  // pool of feasible points found anywhere on the ladder, best-first reusable
  std::vector<BestPoint> pool;
  if (warm_start) {
    AnnealState ws = *warm_start;
    EvalOutcome out = problem.evaluate(ws, ProblemMode::Bound, direction);
    if (out.ok && out.violation <= cfg.violation_threshold)
      pool.push_back({true, out.scalar, out.kl, std::move(ws)});
  }
  {
    // the reference itself is feasible at every radius
    AnnealState rs = ref_state;
    pool.push_back({true, ref_out.scalar, ref_out.kl, std::move(rs)});
  }

  Rng rng = Rng::substream(cfg.seed, direction == Direction::Lower ? 17 : 29);
  const std::size_t d = problem.dual_dim(ProblemMode::Bound);

  for (int j = 1; j <= cfg.opt_steps; ++j) {
    const double temp = temperature(j, cfg);
    for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
      const double delta = cfg.radii[i];
      BoundRecord& rec = curve.records[i];
      rec.delta = delta;

      if (delta == 0.0) {
        // singleton perturbation set: the reference is the only feasible point
        if (direction == Direction::Lower) {
          rec.has_lower = true;
          rec.lower = curve.reference;
          rec.kl_lower = 0.0;
          rec.state_lower = ref_state;
        } else {
          rec.has_upper = true;
          rec.upper = curve.reference;
          rec.kl_upper = 0.0;
          rec.state_upper = ref_state;
        }
        continue;
      }

      // warm start: best pooled point feasible at this radius
      const BestPoint* init = nullptr;
      for (const BestPoint& bp : pool)
        if (bp.kl <= delta && (!init || sign * bp.scalar < sign * init->scalar)) init = &bp;
      AnnealState cur = init ? init->state : ref_state;

      EvalOutcome cur_out = problem.evaluate(cur, ProblemMode::Bound, direction);
      auto penalize = [&](const EvalOutcome& o) {
        if (!o.ok) return std::numeric_limits<double>::infinity();
        double p = sign * o.scalar;
        if (o.violation > cfg.violation_threshold) p += cfg.penalty;
        if (o.kl > delta) p += cfg.penalty;
        return p;
      };
      double cur_pen = penalize(cur_out);
      double cur_prior = log_prior(cur.duals, cfg.prior_sd);

      BestPoint best;
      auto consider = [&](const EvalOutcome& o, const AnnealState& s) {
        if (!o.ok || o.violation > cfg.violation_threshold || o.kl > delta) return;
        if (!best.found || sign * o.scalar < sign * best.scalar) {
          best.found = true;
          best.scalar = o.scalar;
          best.kl = o.kl;
          best.state = s;
        }
      };
      consider(cur_out, cur);

      ChainScratch scratch(d, cfg.prior_sd);
      scratch.observe(cur.duals);

      for (int t = 0; t < cfg.mcmc_steps; ++t) {
        AnnealState prop = cur;
        for (std::size_t c = 0; c < d; ++c)
          prop.duals[c] += scratch.sd(c) * rng.normal();
        EvalOutcome prop_out;
        try {
          prop_out = problem.evaluate(prop, ProblemMode::Bound, direction);
        } catch (const std::exception&) {
          prop_out.ok = false;
        }
        const double prop_pen = penalize(prop_out);
        const double prop_prior = log_prior(prop.duals, cfg.prior_sd);
        const double log_acc = -temp * (prop_pen - cur_pen) + prop_prior - cur_prior;
        const bool accept =
            std::isfinite(prop_pen) && std::log(rng.uniform01()) < log_acc;
        if (stats) {
          ++stats->proposals;
          if (accept) ++stats->accepted;
        }
        if (accept) {
          cur = std::move(prop);
          cur_pen = prop_pen;
          cur_prior = prop_prior;
          consider(prop_out, cur);
        }
        scratch.adapt(t, accept);
        scratch.observe(cur.duals);
      }

      if (best.found) {
        pool.push_back(best);
        if (direction == Direction::Lower) {
          if (!rec.has_lower || best.scalar < rec.lower) {
            rec.has_lower = true;
            rec.lower = best.scalar;
            rec.kl_lower = best.kl;
          }
        } else {
          if (!rec.has_upper || best.scalar > rec.upper) {
            rec.has_upper = true;
            rec.upper = best.scalar;
            rec.kl_upper = best.kl;
          }
        }
      }
    }
  }

  // nesting: any point feasible at a smaller radius is feasible here too
  for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
    BoundRecord& rec = curve.records[i];
    if (rec.delta == 0.0) continue;
    for (const BestPoint& bp : pool) {
      if (!(bp.kl <= rec.delta)) continue;
      if (direction == Direction::Lower) {
        if (!rec.has_lower || bp.scalar < rec.lower) {
          rec.has_lower = true;
          rec.lower = bp.scalar;
          rec.kl_lower = bp.kl;
          rec.state_lower = bp.state;
        }
      } else {
        if (!rec.has_upper || bp.scalar > rec.upper) {
          rec.has_upper = true;
          rec.upper = bp.scalar;
          rec.kl_upper = bp.kl;
          rec.state_upper = bp.state;
        }
      }
    }
    rec.binding_lower = rec.has_lower && rec.kl_lower > 0.95 * rec.delta;
    rec.binding_upper = rec.has_upper && rec.kl_upper > 0.95 * rec.delta;
  }
  return curve;
}

BoundCurve merge_curves(const BoundCurve& lower, const BoundCurve& upper) {
  if (lower.records.size() != upper.records.size())
    throw std::invalid_argument("merge_curves: radius ladders differ");
  BoundCurve out = lower;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].has_upper = upper.records[i].has_upper;
    out.records[i].upper = upper.records[i].upper;
    out.records[i].kl_upper = upper.records[i].kl_upper;
    out.records[i].binding_upper = upper.records[i].binding_upper;
    out.records[i].state_upper = upper.records[i].state_upper;
  }
  return out;
}

LocalSensitivity local_sensitivity(const BoundCurve& curve, double delta0) {
  std::vector<const BoundRecord*> at;
  for (const BoundRecord& r : curve.records)
    if (r.delta >= delta0) at.push_back(&r);
  std::sort(at.begin(), at.end(),
            [](const BoundRecord* a, const BoundRecord* b) { return a->delta < b->delta; });
  if (at.size() < 2)
    throw std::invalid_argument("local_sensitivity: need two radii at or above delta0");
  const BoundRecord* a = at[0];
  const BoundRecord* b = at[1];
  LocalSensitivity out;
  const double dd = b->delta - a->delta;
  if (a->has_lower && b->has_lower) out.lower_slope = (b->lower - a->lower) / dd;
  if (a->has_upper && b->has_upper) out.upper_slope = (b->upper - a->upper) / dd;
  return out;
}

double global_bound(const GlobalBoundParams& params, double lambda_kl) {
  if (!(lambda_kl > 0.0 && lambda_kl <= 1.0))
    throw std::invalid_argument("global_bound: lambda_kl must lie in (0, 1]");
  double dim_sum = 0.0;
  for (int d : params.dims) dim_sum += static_cast<double>(d);
  const double k = static_cast<double>(params.dims.size()) + 1.0;
  return dim_sum * lambda_kl * std::log(1.0 / lambda_kl) +
         std::pow(k - 1.0, 1.0 / static_cast<double>(params.p)) * params.lipschitz *
             params.scale * lambda_kl;
}

namespace {

RobustnessResult robustness_chain(AnnealProblem& problem, const SensitivityConfig& config,
                                  Direction direction, bool use_threshold, double s_bar,
                                  const AnnealState* warm_start) {
  SensitivityConfig cfg = config;
  const double sign = direction == Direction::Lower ? 1.0 : -1.0;

  AnnealState ref_state = problem.reference_state(ProblemMode::Robustness);
  AnnealState ref_eval = ref_state;
  EvalOutcome ref_out = problem.evaluate(ref_eval, ProblemMode::Robustness, direction);

  RobustnessResult res;
  auto scalar_gap = [&](double scalar) {
    return use_threshold ? std::max(0.0, sign * (scalar - s_bar)) : 0.0;
  };
  auto feasible = [&](const EvalOutcome& o) {
    return o.ok && o.violation <= cfg.violation_threshold &&
           scalar_gap(o.scalar) <= 1e-9 * (1.0 + std::abs(s_bar));
  };
  if (feasible(ref_out)) {
    // the reference already satisfies every constraint
    res.delta = 0.0;
    res.feasible = true;
    res.scalar_at_witness = ref_out.scalar;
    res.witness = ref_state;
    return res;
  }

  Rng rng = Rng::substream(cfg.seed, 43);
  const std::size_t d = problem.dual_dim(ProblemMode::Robustness);
  AnnealState cur = ref_state;
  EvalOutcome cur_out = ref_out;
  if (warm_start && warm_start->duals.size() == d) {
    AnnealState ws = *warm_start;
    try {
      EvalOutcome out = problem.evaluate(ws, ProblemMode::Robustness, direction);
      if (out.ok) {
        cur = std::move(ws);
        cur_out = std::move(out);
      }
    } catch (const std::exception&) {
    }
  }

  auto penalize = [&](const EvalOutcome& o) {
    if (!o.ok) return std::numeric_limits<double>::infinity();
    double p = o.kl;
    if (o.violation + scalar_gap(o.scalar) > cfg.violation_threshold) p += cfg.penalty;
    // steer toward the threshold even while infeasible
    p += scalar_gap(o.scalar);
    return p;
  };
  double cur_pen = penalize(cur_out);
  double cur_prior = log_prior(cur.duals, cfg.prior_sd);

  auto consider = [&](const EvalOutcome& o, const AnnealState& s) {
    if (!feasible(o)) return;
    if (!res.feasible || o.kl < res.delta) {
      res.feasible = true;
      res.delta = o.kl;
      res.scalar_at_witness = o.scalar;
      res.witness = s;
    }
  };
  consider(cur_out, cur);

  for (int j = 1; j <= cfg.opt_steps; ++j) {
    const double temp = temperature(j, cfg);
    ChainScratch scratch(d, cfg.prior_sd);
    scratch.observe(cur.duals);
    for (int t = 0; t < cfg.mcmc_steps; ++t) {
      AnnealState prop = cur;
      for (std::size_t c = 0; c < d; ++c) prop.duals[c] += scratch.sd(c) * rng.normal();
      EvalOutcome prop_out;
      try {
        prop_out = problem.evaluate(prop, ProblemMode::Robustness, direction);
      } catch (const std::exception&) {
        prop_out.ok = false;
      }
      const double prop_pen = penalize(prop_out);
      const double prop_prior = log_prior(prop.duals, cfg.prior_sd);
      const double log_acc = -temp * (prop_pen - cur_pen) + prop_prior - cur_prior;
      const bool accept = std::isfinite(prop_pen) && std::log(rng.uniform01()) < log_acc;
      if (accept) {
        cur = std::move(prop);
        cur_pen = prop_pen;
        cur_prior = prop_prior;
        consider(prop_out, cur);
      }
      scratch.adapt(t, accept);
      scratch.observe(cur.duals);
    }
  }
  return res;
}

}  // namespace

RobustnessResult robustness_metric(AnnealProblem& problem, double s_bar, Direction direction,
                                   const SensitivityConfig& config,
                                   const AnnealState* warm_start) {
  return robustness_chain(problem, config, direction, true, s_bar, warm_start);
}

RobustnessResult delta_star(AnnealProblem& problem, const SensitivityConfig& config) {
  return robustness_chain(problem, config, Direction::Lower, false, 0.0, nullptr);
}

}  // namespace robustdyn
