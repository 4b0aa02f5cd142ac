// Command-line front end: synthetic panel generation, reference estimation,
// bound curves over the KL radius ladder, sensitivity reports, and raw
// EOT/bridge solves. Exit codes: 0 success, 1 solver failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "robustdyn/io_json.hpp"
#include "robustdyn/problems.hpp"
#include "robustdyn/sensitivity.hpp"
#include "robustdyn/synth.hpp"

namespace fs = std::filesystem;
using namespace robustdyn;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string mode = "car";
  std::string panel_path, truth_path, problem_path, reference_path;
  std::string out_dir = ".";
  bool fit_reference = false;
  std::string radii_arg;
  std::string direction = "both";
  int jobs = 1;
  std::string config_path;
  std::uint64_t t1 = 0;
  bool surplus = false;
  std::uint64_t hour_index = 0;
  bool frisch = false;
};

std::vector<double> parse_radii(const std::string& arg) {
  std::vector<double> out;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

SensitivityConfig load_config(const CommonArgs& args, json* manifest_cfg) {
  SensitivityConfig cfg;
  if (!args.config_path.empty()) {
    const json j = json::parse(io::read_file(args.config_path));
    io::apply_config_overrides(cfg, j);
  }
  if (!args.radii_arg.empty()) cfg.radii = parse_radii(args.radii_arg);
  if (cfg.radii.empty()) cfg.radii = default_radii();
  if (const char* env = std::getenv("ROBUSTDYN_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  if (manifest_cfg) *manifest_cfg = io::to_json(cfg);
  return cfg;
}

// long-format panel: period/day, hour, k, w-bin, count, share
std::string car_panel_csv(const SynthCarSpec& spec, const CarPanel& panel) {
  std::ostringstream out;
  out.precision(17);
  out << "period,hour,k,w_bin,count,share\n";
  for (std::size_t t = 0; t < panel.observed_s0.size(); ++t)
    out << t << ",0,0,0," << spec.market_size << ',' << panel.observed_s0[t] << '\n';
  return out.str();
}

std::string taxi_panel_csv(const TaxiPanel& panel) {
  std::ostringstream out;
  out.precision(17);
  out << "period,hour,k,w_bin,count,share\n";
  const FiniteHorizonModel& m = panel.model;
  for (std::size_t day = 0; day < m.counts.size(); ++day)
    for (std::size_t t = 0; t < m.horizon(); ++t)
      for (std::size_t ki = 0; ki < m.k_sets[t].size(); ++ki)
        out << day << ',' << m.hours[t] << ',' << m.k_sets[t][ki] << ','
            << m.w_bin[day][t] << ',' << m.counts[day][t][ki] << ','
            << m.observed_ccp[day][t][ki] << '\n';
  return out.str();
}

std::vector<double> car_shares_from_csv(const std::string& content) {
  std::vector<double> shares;
  std::stringstream ss(content);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto last = line.find_last_of(',');
    shares.push_back(std::stod(line.substr(last + 1)));
  }
  return shares;
}

json reference_to_json(const CarReference& ref) {
  return json{{"ar1", {{"intercept", ref.ar1.intercept},
                       {"slope", ref.ar1.slope},
                       {"sigma", ref.ar1.sigma}}},
              {"chain", io::to_json(ref.chain)},
              {"policy_s0", ref.policy.s0},
              {"recovered_omega", ref.recovered_omega},
              {"fixed_point_eps", ref.fixed_point_eps},
              {"vio_ref", ref.vio_ref},
              {"iterations", ref.iterations}};
}

CarReference reference_from_json(const json& j) {
  CarReference ref;
  ref.ar1.intercept = j.at("ar1").at("intercept").get<double>();
  ref.ar1.slope = j.at("ar1").at("slope").get<double>();
  ref.ar1.sigma = j.at("ar1").at("sigma").get<double>();
  ref.chain = io::chain_from_json(j.at("chain"));
  ref.policy = SharePolicy{ref.chain.grid, j.at("policy_s0").get<std::vector<double>>()};
  ref.recovered_omega = j.at("recovered_omega").get<std::vector<double>>();
  ref.fixed_point_eps = j.at("fixed_point_eps").get<double>();
  ref.vio_ref = j.at("vio_ref").get<double>();
  ref.f0 = joint_from_chain(ref.chain);
  return ref;
}

json manifest_json(const std::string& command, const json& cfg,
                   const std::vector<std::pair<std::string, std::string>>& inputs) {
  json inputs_j = json::object();
  for (const auto& [path, content] : inputs)
    inputs_j[path] = io::content_hash(content);
  return json{{"command", command}, {"config", cfg}, {"inputs", inputs_j}};
}

InfiniteHorizonModel car_model_from_truth(const json& truth,
                                          const std::vector<double>& shares,
                                          const MarkovChain& chain) {
  InfiniteHorizonModel model;
  model.beta = truth.at("model").at("beta").get<double>();
  model.alpha = truth.at("model").at("alpha").get<double>();
  model.chain = chain;
  model.observed_s0 = shares;
  const double offset = truth.at("model").at("offset").get<double>();
  model.period_offsets.assign(shares.size(), offset);
  model.market_size.assign(shares.size(),
                           truth.at("model").at("market_size").get<double>());
  model.ev_conditional_shares.assign(
      shares.size(), truth.at("model").at("ev_conditional_share").get<double>());
  return model;
}

struct LoadedProblem {
  std::unique_ptr<AnnealProblem> problem;
  SensitivityConfig cfg;
  json manifest;
};

LoadedProblem load_problem(const CommonArgs& args, const std::string& command) {
  LoadedProblem lp;
  json cfg_json;
  lp.cfg = load_config(args, &cfg_json);
  std::vector<std::pair<std::string, std::string>> inputs;

  if (args.mode == "car") {
    if (args.panel_path.empty() || args.truth_path.empty())
      throw std::invalid_argument("car mode needs --panel and --truth");
    const std::string panel_content = io::read_file(args.panel_path);
    const std::string truth_content = io::read_file(args.truth_path);
    inputs.emplace_back(args.panel_path, panel_content);
    inputs.emplace_back(args.truth_path, truth_content);
    const json truth = json::parse(truth_content);
    const std::vector<double> shares = car_shares_from_csv(panel_content);

    CarReference ref;
    if (!args.reference_path.empty()) {
      const std::string ref_content = io::read_file(args.reference_path);
      inputs.emplace_back(args.reference_path, ref_content);
      ref = reference_from_json(json::parse(ref_content));
    } else if (args.fit_reference) {
      ref = fit_reference_car(shares, truth.at("model").at("beta").get<double>(),
                              truth.at("model").at("n_grid").get<std::size_t>());
    } else {
      throw std::invalid_argument("car mode needs --reference or --fit-reference");
    }
    lp.cfg.fixed_point_eps = ref.fixed_point_eps;
    InfiniteHorizonModel model = car_model_from_truth(truth, shares, ref.chain);
    CarProblemOptions opts;
    opts.t1 = args.t1;
    opts.surplus = args.surplus;
    lp.problem = std::make_unique<CarProblem>(std::move(model), std::move(ref), opts);
  } else if (args.mode == "raw-eot") {
    if (args.problem_path.empty()) throw std::invalid_argument("raw-eot mode needs --problem");
    const std::string content = io::read_file(args.problem_path);
    inputs.emplace_back(args.problem_path, content);
    const json j = json::parse(content);
    RawEotSpec spec;
    spec.f0 = io::coupling_from_json(j.at("f0"));
    spec.grids = spec.f0.grids;
    if (j.contains("scalar")) spec.scalar = j.at("scalar").get<std::vector<double>>();
    if (j.contains("moments")) {
      for (const auto& term : j.at("moments").at("terms")) {
        Matrix m(spec.grids[0].size(), spec.grids[1].size());
        m.a = term.get<std::vector<double>>();
        spec.moments.terms.push_back(std::move(m));
      }
      spec.moments.target = j.at("moments").at("target").get<std::vector<double>>();
      if (j.at("moments").contains("eps_n"))
        spec.moments.eps_n = j.at("moments").at("eps_n").get<double>();
    }
    lp.problem = std::make_unique<RawEotProblem>(std::move(spec));
  } else if (args.mode == "bridge") {
    if (args.problem_path.empty()) throw std::invalid_argument("bridge mode needs --problem");
    const std::string content = io::read_file(args.problem_path);
    inputs.emplace_back(args.problem_path, content);
    const json j = json::parse(content);
    BridgeProblemSpec spec;
    spec.f0 = io::path_law_from_json(j.at("f0"));
    for (const auto& step : j.at("scalar_steps")) {
      Matrix m(spec.f0.grid.size(), spec.f0.grid.size());
      m.a = step.get<std::vector<double>>();
      spec.scalar_steps.steps.push_back(std::move(m));
    }
    lp.problem = std::make_unique<BridgeProblem>(std::move(spec));
  } else if (args.mode == "taxi") {
    if (args.problem_path.empty())
      throw std::invalid_argument("taxi mode needs --problem (synthetic taxi spec json)");
    const std::string content = io::read_file(args.problem_path);
    inputs.emplace_back(args.problem_path, content);
    const SynthTaxiSpec spec = io::taxi_spec_from_json(json::parse(content));
    TaxiPanel panel = gen_taxi_panel(spec);
    TaxiReference ref = fit_reference_taxi(panel.model, spec.n_xi);
    lp.cfg.fixed_point_eps = ref.fixed_point_eps;
    TaxiProblemOptions opts;
    opts.hour_index = args.hour_index;
    opts.frisch = args.frisch;
    lp.problem =
        std::make_unique<TaxiProblem>(std::move(panel.model), std::move(ref), opts);
  } else {
    throw std::invalid_argument("unknown mode: " + args.mode);
  }
  lp.manifest = manifest_json(command, cfg_json, inputs);
  lp.manifest["seed"] = lp.cfg.seed;
  return lp;
}

BoundCurve parse_bounds_csv(const std::string& content) {
  BoundCurve curve;
  std::stringstream ss(content);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < 7) cells.push_back("");
    BoundRecord r;
    r.delta = std::stod(cells[0]);
    if (!cells[1].empty()) {
      r.has_lower = true;
      r.lower = std::stod(cells[1]);
      r.kl_lower = cells[3].empty() ? 0.0 : std::stod(cells[3]);
    }
    if (!cells[2].empty()) {
      r.has_upper = true;
      r.upper = std::stod(cells[2]);
      r.kl_upper = cells[4].empty() ? 0.0 : std::stod(cells[4]);
    }
    r.binding_lower = cells[5] == "1";
    r.binding_upper = cells[6] == "1";
    curve.records.push_back(r);
  }
  return curve;
}

int cmd_synth(const std::string& which, const std::string& spec_path,
              const std::string& out_dir) {
  const std::string spec_content = io::read_file(spec_path);
  const json spec_json = json::parse(spec_content);
  fs::create_directories(out_dir);

  json truth;
  std::string panel_csv;
  if (which == "car") {
    const SynthCarSpec spec = io::car_spec_from_json(spec_json);
    const CarPanel panel = gen_car_panel(spec);
    panel_csv = car_panel_csv(spec, panel);
    const Ar1Fit star = refit_ar1(panel.true_omega);
    truth = json{{"kind", "car"},
                 {"ar1", {{"intercept", star.intercept},
                          {"slope", star.slope},
                          {"sigma", star.sigma}}},
                 {"chain", io::to_json(panel.true_chain)},
                 {"policy_s0", panel.true_policy.s0},
                 {"omega", panel.true_omega},
                 {"model", {{"beta", spec.beta},
                            {"alpha", spec.alpha},
                            {"offset", spec.offset},
                            {"market_size", spec.market_size},
                            {"ev_conditional_share", spec.ev_conditional_share},
                            {"n_grid", spec.n_grid}}}};
  } else if (which == "taxi") {
    const SynthTaxiSpec spec = io::taxi_spec_from_json(spec_json);
    const TaxiPanel panel = gen_taxi_panel(spec);
    panel_csv = taxi_panel_csv(panel);
    truth = json{{"kind", "taxi"},
                 {"theta", panel.model.theta},
                 {"xi", panel.true_xi},
                 {"model", {{"beta", spec.beta},
                            {"mu", spec.mu},
                            {"rho", spec.rho},
                            {"sigma", spec.sigma},
                            {"n_xi", spec.n_xi}}}};
  } else {
    throw std::invalid_argument("synth: unknown panel kind " + which);
  }
  io::write_file(out_dir + "/panel.csv", panel_csv);
  io::write_file(out_dir + "/truth.json", truth.dump(2) + "\n");
  json manifest = manifest_json("synth " + which, spec_json,
                                {{spec_path, spec_content}});
  io::write_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int cmd_fit_reference(const CommonArgs& args) {
  if (args.mode == "car") {
    const std::string panel_content = io::read_file(args.panel_path);
    const std::string truth_content = io::read_file(args.truth_path);
    const json truth = json::parse(truth_content);
    const std::vector<double> shares = car_shares_from_csv(panel_content);
    const CarReference ref =
        fit_reference_car(shares, truth.at("model").at("beta").get<double>(),
                          truth.at("model").at("n_grid").get<std::size_t>());
    fs::create_directories(args.out_dir);
    io::write_file(args.out_dir + "/reference.json", reference_to_json(ref).dump(2) + "\n");
    json manifest = manifest_json("fit-reference car", json::object(),
                                  {{args.panel_path, panel_content},
                                   {args.truth_path, truth_content}});
    io::write_file(args.out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return 0;
  }
  if (args.mode == "taxi") {
    const std::string content = io::read_file(args.problem_path);
    const SynthTaxiSpec spec = io::taxi_spec_from_json(json::parse(content));
    TaxiPanel panel = gen_taxi_panel(spec);
    const TaxiReference ref = fit_reference_taxi(panel.model, spec.n_xi);
    fs::create_directories(args.out_dir);
    const json out{{"rho", ref.rho},
                   {"mu_xi", ref.mu_xi},
                   {"sigma_xi", ref.sigma_xi},
                   {"chain", io::to_json(ref.chain)},
                   {"fixed_point_eps", ref.fixed_point_eps},
                   {"vio_ref", ref.vio_ref}};
    io::write_file(args.out_dir + "/reference.json", out.dump(2) + "\n");
    return 0;
  }
  throw std::invalid_argument("fit-reference: unknown mode " + args.mode);
}

int cmd_bounds(const CommonArgs& args) {
  LoadedProblem lp = load_problem(args, "bounds");
  fs::create_directories(args.out_dir);

  BoundCurve curve;
  try {
    if (args.direction == "both") {
      if (args.jobs >= 2) {
        auto lo_future = std::async(std::launch::async, [&] {
          return anneal_optimize(*lp.problem, lp.cfg, Direction::Lower);
        });
        const BoundCurve hi = anneal_optimize(*lp.problem, lp.cfg, Direction::Upper);
        curve = merge_curves(lo_future.get(), hi);
      } else {
        const BoundCurve lo = anneal_optimize(*lp.problem, lp.cfg, Direction::Lower);
        const BoundCurve hi = anneal_optimize(*lp.problem, lp.cfg, Direction::Upper);
        curve = merge_curves(lo, hi);
      }
    } else if (args.direction == "lower") {
      curve = anneal_optimize(*lp.problem, lp.cfg, Direction::Lower);
    } else if (args.direction == "upper") {
      curve = anneal_optimize(*lp.problem, lp.cfg, Direction::Upper);
    } else {
      throw std::invalid_argument("bounds: unknown direction " + args.direction);
    }
  } catch (const SolverError& e) {
    // flush whatever exists with a .partial suffix, then fail
    io::write_file(args.out_dir + "/bounds.csv.partial", io::bound_curve_csv(curve));
    std::cerr << "bounds: solver failure: " << e.what() << "\n";
    return 1;
  }

  io::write_file(args.out_dir + "/bounds.csv", io::bound_curve_csv(curve));
  lp.manifest["reference"] = curve.reference;
  io::write_file(args.out_dir + "/manifest.json", lp.manifest.dump(2) + "\n");

  // per-delta worst-case plans: re-evaluate the winning states
  for (std::size_t i = 0; i < curve.records.size(); ++i) {
    const BoundRecord& r = curve.records[i];
    json out = json::object();
    out["delta"] = r.delta;
    if (r.has_lower && !r.state_lower.duals.empty()) {
      AnnealState st = r.state_lower;
      const EvalOutcome o = lp.problem->evaluate(st, ProblemMode::Bound, Direction::Lower);
      if (o.plan.arity() == 2 && o.plan.grids[0] == o.plan.grids[1]) {
        try {
          out["worst_kernel_lower"] = io::to_json(worst_case_kernel(o.plan));
        } catch (const std::exception&) {
          out["worst_plan_lower"] = io::to_json(o.plan);
        }
      }
    }
    if (r.has_upper && !r.state_upper.duals.empty()) {
      AnnealState st = r.state_upper;
      const EvalOutcome o = lp.problem->evaluate(st, ProblemMode::Bound, Direction::Upper);
      if (o.plan.arity() == 2 && o.plan.grids[0] == o.plan.grids[1]) {
        try {
          out["worst_kernel_upper"] = io::to_json(worst_case_kernel(o.plan));
        } catch (const std::exception&) {
          out["worst_plan_upper"] = io::to_json(o.plan);
        }
      }
    }
    std::ostringstream name;
    name << args.out_dir << "/worst_case_delta_" << i << ".json";
    io::write_file(name.str(), out.dump(2) + "\n");
  }
  std::cout << io::bound_curve_csv(curve);
  return 0;
}

int cmd_sensitivity(const std::string& kind, const CommonArgs& args, double delta0,
                    const std::string& curve_path, const std::string& thresholds_arg,
                    const GlobalBoundParams& gb, bool have_gb) {
  if (kind == "local" || kind == "global") {
    const std::string content = io::read_file(curve_path);
    const BoundCurve curve = parse_bounds_csv(content);
    json report;
    report["curve"] = curve_path;
    // echo the config hash from the sibling manifest when present
    const fs::path manifest_path = fs::path(curve_path).parent_path() / "manifest.json";
    if (fs::exists(manifest_path)) {
      const json manifest = json::parse(io::read_file(manifest_path.string()));
      report["config_hash"] = io::content_hash(manifest.at("config").dump());
    }
    if (kind == "local") {
      const LocalSensitivity ls = local_sensitivity(curve, delta0);
      report["delta0"] = delta0;
      report["lower_slope"] = ls.lower_slope;
      report["upper_slope"] = ls.upper_slope;
    } else {
      const std::size_t n = curve.records.size();
      if (n < 2) throw std::invalid_argument("global: need at least two radii");
      const BoundRecord& a = curve.records[n - 2];
      const BoundRecord& b = curve.records[n - 1];
      auto rel = [](double x, double y) {
        return std::abs(x - y) / std::max(1e-12, std::abs(y));
      };
      bool flat = true;
      if (a.has_lower && b.has_lower && rel(a.lower, b.lower) >= 1e-3) flat = false;
      if (a.has_upper && b.has_upper && rel(a.upper, b.upper) >= 1e-3) flat = false;
      report["flattened"] = flat;
      if (b.has_lower) report["limit_lower"] = b.lower;
      if (b.has_upper) report["limit_upper"] = b.upper;
      if (have_gb) {
        json bounds = json::object();
        for (double lk : {1.0, 0.5, 0.1, 0.01})
          bounds[std::to_string(lk)] = global_bound(gb, lk);
        report["entropic_error_bound"] = bounds;
      }
    }
    std::cout << report.dump(2) << "\n";
    if (!args.out_dir.empty()) {
      fs::create_directories(args.out_dir);
      io::write_file(args.out_dir + "/sensitivity_" + kind + ".json", report.dump(2) + "\n");
    }
    return 0;
  }
  if (kind == "robustness") {
    LoadedProblem lp = load_problem(args, "sensitivity robustness");
    const double reference = lp.problem->reference_scalar();
    json rows = json::array();
    for (double s_bar : parse_radii(thresholds_arg)) {
      const Direction dir = s_bar < reference ? Direction::Lower : Direction::Upper;
      const RobustnessResult res = robustness_metric(*lp.problem, s_bar, dir, lp.cfg);
      rows.push_back(json{{"threshold", s_bar},
                          {"feasible", res.feasible},
                          {"delta", res.feasible ? json(res.delta) : json()},
                          {"scalar_at_witness", res.scalar_at_witness}});
    }
    json report{{"reference", reference},
                {"thresholds", rows},
                {"config_hash", io::content_hash(lp.manifest.at("config").dump())}};
    std::cout << report.dump(2) << "\n";
    fs::create_directories(args.out_dir);
    io::write_file(args.out_dir + "/sensitivity_robustness.json", report.dump(2) + "\n");
    io::write_file(args.out_dir + "/manifest.json", lp.manifest.dump(2) + "\n");
    return 0;
  }
  throw std::invalid_argument("sensitivity: unknown kind " + kind);
}

int cmd_eot_solve(const std::string& problem_path, const std::string& out_path,
                  double lambda_kl, double tol) {
  const json j = json::parse(io::read_file(problem_path));
  std::vector<Grid> grids;
  for (const auto& g : j.at("grids")) grids.emplace_back(g.get<std::vector<double>>());
  CostTensor cost(grids, j.at("cost").get<std::vector<double>>());
  std::vector<DiscreteMeasure> marginals;
  for (const auto& m : j.at("marginals")) marginals.push_back(io::measure_from_json(m));
  std::optional<Coupling> reference;
  if (j.contains("f0")) reference = io::coupling_from_json(j.at("f0"));
  if (j.contains("lambda_kl")) lambda_kl = j.at("lambda_kl").get<double>();
  SinkhornOptions opts;
  opts.tol = tol;
  const EotSolution sol =
      sinkhorn(cost, marginals, lambda_kl, opts, reference ? &*reference : nullptr);
  io::write_file(out_path, io::to_json(sol).dump(2) + "\n");
  std::cout << "value " << sol.value << " iterations " << sol.iterations << "\n";
  return 0;
}

int cmd_bridge_solve(const std::string& problem_path, const std::string& out_path,
                     double lambda_kl, double tol) {
  const json j = json::parse(io::read_file(problem_path));
  const PathLaw f0 = io::path_law_from_json(j.at("f0"));
  PairwiseCost cost;
  for (const auto& step : j.at("cost_steps")) {
    Matrix m(f0.grid.size(), f0.grid.size());
    m.a = step.get<std::vector<double>>();
    cost.steps.push_back(std::move(m));
  }
  if (j.contains("lambda_kl")) lambda_kl = j.at("lambda_kl").get<double>();
  const EndpointMeasure r = auxiliary_endpoint(f0, cost, lambda_kl);
  const EotSolution sol = static_bridge(r, f0.initial, f0.terminal, lambda_kl, tol);
  const PathLaw worst = reconstruct_path_law(f0, cost, sol.potentials, lambda_kl);
  json out{{"endpoint_solution", io::to_json(sol)},
           {"worst_case_law", io::to_json(worst)},
           {"kl_to_reference", path_kl(worst, f0)}};
  io::write_file(out_path, out.dump(2) + "\n");
  std::cout << "value " << sol.value << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robustdyn: worst-case bounds for dynamic discrete-choice counterfactuals"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string synth_kind, spec_path;
  double delta0 = 0.0, lambda_kl = 1.0, tol = 1e-9;
  std::string curve_path, thresholds_arg, out_path = "solution.json";
  GlobalBoundParams gb;
  bool have_gb = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic panel");
  synth->add_option("kind", synth_kind, "car or taxi")->required();
  synth->add_option("--spec", spec_path, "spec json")->required();
  synth->add_option("--out", args.out_dir, "output directory")->required();

  auto* fitref = app.add_subcommand("fit-reference", "fixed-point reference fit");
  fitref->add_option("--mode", args.mode);
  fitref->add_option("--panel", args.panel_path);
  fitref->add_option("--truth", args.truth_path);
  fitref->add_option("--problem", args.problem_path);
  fitref->add_option("--out", args.out_dir)->required();

  auto* bounds = app.add_subcommand("bounds", "bound curves over the radius ladder");
  bounds->add_option("--mode", args.mode);
  bounds->add_option("--panel", args.panel_path);
  bounds->add_option("--truth", args.truth_path);
  bounds->add_option("--problem", args.problem_path);
  bounds->add_option("--reference", args.reference_path);
  bounds->add_flag("--fit-reference", args.fit_reference);
  bounds->add_option("--radii", args.radii_arg, "comma-separated deltas");
  bounds->add_option("--direction", args.direction, "both, lower, or upper");
  bounds->add_option("--jobs", args.jobs);
  bounds->add_option("--config", args.config_path, "SensitivityConfig overrides json");
  bounds->add_option("--t1", args.t1, "period of interest (car)");
  bounds->add_flag("--surplus", args.surplus, "consumer surplus instead of elasticity");
  bounds->add_option("--hour-index", args.hour_index, "layer of interest (taxi)");
  bounds->add_flag("--frisch", args.frisch);
  bounds->add_option("--out", args.out_dir)->required();

  auto* sens = app.add_subcommand("sensitivity", "local, global, or robustness report");
  std::string sens_kind;
  sens->add_option("kind", sens_kind, "local, global, or robustness")->required();
  sens->add_option("--curve", curve_path, "bounds.csv path (local/global)");
  sens->add_option("--delta0", delta0);
  sens->add_option("--mode", args.mode);
  sens->add_option("--panel", args.panel_path);
  sens->add_option("--truth", args.truth_path);
  sens->add_option("--problem", args.problem_path);
  sens->add_option("--reference", args.reference_path);
  sens->add_flag("--fit-reference", args.fit_reference);
  sens->add_option("--config", args.config_path);
  sens->add_option("--t1", args.t1);
  sens->add_option("--thresholds", thresholds_arg, "comma-separated scalar thresholds");
  sens->add_option("--lipschitz", gb.lipschitz)->each([&](const std::string&) { have_gb = true; });
  sens->add_option("--scale", gb.scale);
  sens->add_option("--p", gb.p);
  sens->add_option("--out", args.out_dir);

  auto* eot = app.add_subcommand("eot-solve", "run the Sinkhorn solver on a cost json");
  eot->add_option("--problem", args.problem_path)->required();
  eot->add_option("--out", out_path);
  eot->add_option("--lambda-kl", lambda_kl);
  eot->add_option("--tol", tol);

  auto* bridge = app.add_subcommand("bridge-solve", "static Schroedinger bridge solve");
  bridge->add_option("--problem", args.problem_path)->required();
  bridge->add_option("--out", out_path);
  bridge->add_option("--lambda-kl", lambda_kl);
  bridge->add_option("--tol", tol);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_kind, spec_path, args.out_dir);
    if (fitref->parsed()) return cmd_fit_reference(args);
    if (bounds->parsed()) return cmd_bounds(args);
    if (sens->parsed()) {
      gb.dims = {1};
      return cmd_sensitivity(sens_kind, args, delta0, curve_path, thresholds_arg, gb, have_gb);
    }
    if (eot->parsed()) return cmd_eot_solve(args.problem_path, out_path, lambda_kl, tol);
    if (bridge->parsed()) return cmd_bridge_solve(args.problem_path, out_path, lambda_kl, tol);
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
