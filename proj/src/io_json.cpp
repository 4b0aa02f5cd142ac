#include "robustdyn/io_json.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robustdyn::io {

json to_json(const DiscreteMeasure& m) {
  return json{{"grid", m.grid.points}, {"weights", m.weights}};
}

DiscreteMeasure measure_from_json(const json& j) {
  return DiscreteMeasure(Grid(j.at("grid").get<std::vector<double>>()),
                         j.at("weights").get<std::vector<double>>());
}

json to_json(const Coupling& c) {
  json grids = json::array();
  for (const Grid& g : c.grids) grids.push_back(g.points);
  return json{{"grids", grids}, {"tensor", c.tensor}};
}

Coupling coupling_from_json(const json& j) {
  std::vector<Grid> grids;
  for (const auto& g : j.at("grids")) grids.emplace_back(g.get<std::vector<double>>());
  return Coupling(std::move(grids), j.at("tensor").get<std::vector<double>>());
}

json to_json(const MarkovChain& chain) {
  json rows = json::array();
  for (std::size_t i = 0; i < chain.kernel.rows; ++i) {
    const auto r = chain.kernel.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return json{{"grid", chain.grid.points},
              {"kernel", rows},
              {"stationary", chain.stationary.weights}};
}

MarkovChain chain_from_json(const json& j) {
  Grid grid(j.at("grid").get<std::vector<double>>());
  const auto rows = j.at("kernel");
  Matrix k(rows.size(), grid.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = rows[i].get<std::vector<double>>();
    for (std::size_t c = 0; c < row.size(); ++c) k(i, c) = row[c];
  }
  DiscreteMeasure st(grid, j.at("stationary").get<std::vector<double>>());
  return MarkovChain(std::move(grid), std::move(k), std::move(st));
}

json to_json(const PathLaw& law) {
  json kernels = json::array();
  for (const Matrix& K : law.kernels) {
    json rows = json::array();
    for (std::size_t i = 0; i < K.rows; ++i) {
      const auto r = K.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    kernels.push_back(rows);
  }
  return json{{"grid", law.grid.points},
              {"initial", law.initial.weights},
              {"kernels", kernels},
              {"terminal", law.terminal.weights}};
}

PathLaw path_law_from_json(const json& j) {
  Grid grid(j.at("grid").get<std::vector<double>>());
  DiscreteMeasure init(grid, j.at("initial").get<std::vector<double>>());
  std::vector<Matrix> ks;
  for (const auto& mat : j.at("kernels")) {
    Matrix K(mat.size(), grid.size());
    for (std::size_t i = 0; i < mat.size(); ++i) {
      const auto row = mat[i].get<std::vector<double>>();
      for (std::size_t c = 0; c < row.size(); ++c) K(i, c) = row[c];
    }
    ks.push_back(std::move(K));
  }
  PathLaw law(std::move(grid), std::move(init), std::move(ks));
  if (j.contains("terminal")) {
    const auto given = j.at("terminal").get<std::vector<double>>();
    for (std::size_t i = 0; i < given.size(); ++i)
      if (std::abs(given[i] - law.terminal.weights[i]) > 1e-10)
        throw std::invalid_argument("path_law_from_json: terminal does not match kernels");
  }
  return law;
}

json to_json(const EotSolution& sol) {
  return json{{"potentials", sol.potentials.phi},
              {"plan", to_json(sol.plan)},
              {"value", sol.value},
              {"iterations", sol.iterations},
              {"residual", sol.residual}};
}

json to_json(const SensitivityConfig& cfg) {
  return json{{"radii", cfg.radii},
              {"mcmc_steps", cfg.mcmc_steps},
              {"opt_steps", cfg.opt_steps},
              {"anneal_multiplier", cfg.anneal_multiplier},
              {"violation_threshold", cfg.violation_threshold},
              {"penalty", cfg.penalty},
              {"prior_sd", cfg.prior_sd},
              {"fixed_point_eps", cfg.fixed_point_eps},
              {"moment_eps", cfg.moment_eps},
              {"lambda_kl_floor", cfg.lambda_kl_floor},
              {"seed", cfg.seed}};
}

void apply_config_overrides(SensitivityConfig& cfg, const json& j) {
  if (j.contains("radii")) cfg.radii = j["radii"].get<std::vector<double>>();
  if (j.contains("mcmc_steps")) cfg.mcmc_steps = j["mcmc_steps"].get<int>();
  if (j.contains("opt_steps")) cfg.opt_steps = j["opt_steps"].get<int>();
  if (j.contains("anneal_multiplier"))
    cfg.anneal_multiplier = j["anneal_multiplier"].get<double>();
  if (j.contains("violation_threshold"))
    cfg.violation_threshold = j["violation_threshold"].get<double>();
  if (j.contains("penalty")) cfg.penalty = j["penalty"].get<double>();
  if (j.contains("prior_sd")) cfg.prior_sd = j["prior_sd"].get<double>();
  if (j.contains("fixed_point_eps")) cfg.fixed_point_eps = j["fixed_point_eps"].get<double>();
  if (j.contains("moment_eps")) cfg.moment_eps = j["moment_eps"].get<double>();
  if (j.contains("lambda_kl_floor")) cfg.lambda_kl_floor = j["lambda_kl_floor"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
}

SynthCarSpec car_spec_from_json(const json& j) {
  SynthCarSpec s;
  if (j.contains("periods")) s.periods = j["periods"].get<std::size_t>();
  if (j.contains("gamma0")) s.gamma0 = j["gamma0"].get<double>();
  if (j.contains("gamma1")) s.gamma1 = j["gamma1"].get<double>();
  if (j.contains("sigma")) s.sigma = j["sigma"].get<double>();
  if (j.contains("beta")) s.beta = j["beta"].get<double>();
  if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
  if (j.contains("n_grid")) s.n_grid = j["n_grid"].get<std::size_t>();
  if (j.contains("grid_width")) s.grid_width = j["grid_width"].get<double>();
  if (j.contains("offset")) s.offset = j["offset"].get<double>();
  if (j.contains("market_size")) s.market_size = j["market_size"].get<double>();
  if (j.contains("ev_conditional_share"))
    s.ev_conditional_share = j["ev_conditional_share"].get<double>();
  if (j.contains("noise_market_size"))
    s.noise_market_size = j["noise_market_size"].get<double>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  return s;
}

SynthTaxiSpec taxi_spec_from_json(const json& j) {
  SynthTaxiSpec s;
  if (j.contains("first_hour")) s.first_hour = j["first_hour"].get<int>();
  if (j.contains("last_hour")) s.last_hour = j["last_hour"].get<int>();
  if (j.contains("theta")) {
    const auto t = j["theta"].get<std::vector<double>>();
    for (std::size_t i = 0; i < 4 && i < t.size(); ++i) s.theta[i] = t[i];
  }
  if (j.contains("mu")) s.mu = j["mu"].get<double>();
  if (j.contains("rho")) s.rho = j["rho"].get<double>();
  if (j.contains("sigma")) s.sigma = j["sigma"].get<double>();
  if (j.contains("beta")) s.beta = j["beta"].get<double>();
  if (j.contains("n_xi")) s.n_xi = j["n_xi"].get<std::size_t>();
  if (j.contains("xi_width")) s.xi_width = j["xi_width"].get<double>();
  if (j.contains("n_w")) s.n_w = j["n_w"].get<std::size_t>();
  if (j.contains("w_log_mean")) s.w_log_mean = j["w_log_mean"].get<double>();
  if (j.contains("w_log_rho")) s.w_log_rho = j["w_log_rho"].get<double>();
  if (j.contains("w_log_sigma")) s.w_log_sigma = j["w_log_sigma"].get<double>();
  if (j.contains("cohorts")) s.cohorts = j["cohorts"].get<std::size_t>();
  if (j.contains("drivers_per_cohort"))
    s.drivers_per_cohort = j["drivers_per_cohort"].get<std::size_t>();
  if (j.contains("days")) s.days = j["days"].get<std::size_t>();
  if (j.contains("frisch_start_hour")) s.frisch_start_hour = j["frisch_start_hour"].get<int>();
  if (j.contains("population_eccp")) s.population_eccp = j["population_eccp"].get<bool>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  return s;
}

std::string bound_curve_csv(const BoundCurve& curve) {
  std::ostringstream out;
  out.precision(12);
  out << "delta,lower,upper,kl_lower,kl_upper,binding_lower,binding_upper\n";
  for (const BoundRecord& r : curve.records) {
    out << r.delta << ',';
    if (r.has_lower) out << r.lower;
    out << ',';
    if (r.has_upper) out << r.upper;
    out << ',';
    if (r.has_lower) out << r.kl_lower;
    out << ',';
    if (r.has_upper) out << r.kl_upper;
    out << ',' << (r.binding_lower ? 1 : 0) << ',' << (r.binding_upper ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace robustdyn::io
