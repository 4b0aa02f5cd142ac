// Drives the installed binary end to end through std::system; the binary path
// arrives as argv[1] from ctest.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  if (!ok) {
    ++failures;
    std::cerr << "FAIL: " << what << "\n";
  } else {
    std::cout << "ok: " << what << "\n";
  }
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <robustdyn binary>\n";
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path work = fs::temp_directory_path() / "robustdyn_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string w = work.string();

  // --- synth: contract, determinism, usage errors -------------------------
  write(w + "/car_spec.json",
        R"({"periods": 48, "gamma1": 0.6, "sigma": 0.35, "n_grid": 21, "seed": 7})");
  expect(run(bin + " synth car --spec " + w + "/car_spec.json --out " + w + "/p1") == 0,
         "synth car exits 0");
  expect(fs::exists(w + "/p1/panel.csv"), "panel.csv written");
  expect(fs::exists(w + "/p1/truth.json"), "truth.json written");
  expect(fs::exists(w + "/p1/manifest.json"), "manifest.json written");
  expect(run(bin + " synth car --spec " + w + "/missing.json --out " + w + "/p2") == 2,
         "missing spec exits 2");
  expect(run(bin + " synth car --out " + w + "/p2") == 2, "missing required flag exits 2");
  run(bin + " synth car --spec " + w + "/car_spec.json --out " + w + "/p3");
  expect(slurp(w + "/p1/panel.csv") == slurp(w + "/p3/panel.csv"),
         "same seed gives identical panels");

  // --- fit-reference + bounds on the car panel ----------------------------
  expect(run(bin + " fit-reference --mode car --panel " + w + "/p1/panel.csv --truth " + w +
             "/p1/truth.json --out " + w + "/ref") == 0,
         "fit-reference exits 0");
  expect(fs::exists(w + "/ref/reference.json"), "reference.json written");

  write(w + "/cfg.json", R"({"mcmc_steps": 40, "opt_steps": 1, "seed": 3})");
  expect(run(bin + " bounds --mode car --panel " + w + "/p1/panel.csv --truth " + w +
             "/p1/truth.json --reference " + w + "/ref/reference.json --radii 0 --t1 20 " +
             "--config " + w + "/cfg.json --out " + w + "/b0") == 0,
         "bounds at delta 0 exits 0");
  {
    const std::string csv = slurp(w + "/b0/bounds.csv");
    expect(count_lines(csv) == 2, "single-radius curve has one row");
    std::stringstream ss(csv);
    std::string header, row;
    std::getline(ss, header);
    std::getline(ss, row);
    std::stringstream rs(row);
    std::string delta, lower, upper;
    std::getline(rs, delta, ',');
    std::getline(rs, lower, ',');
    std::getline(rs, upper, ',');
    expect(delta == "0", "delta column is 0");
    expect(!lower.empty() && lower == upper, "lower equals upper at delta 0");
  }
  expect(fs::exists(w + "/b0/manifest.json"), "bounds manifest written");
  expect(fs::exists(w + "/b0/worst_case_delta_0.json"), "per-delta worst case written");

  // --direction lower leaves the upper column empty
  expect(run(bin + " bounds --mode car --panel " + w + "/p1/panel.csv --truth " + w +
             "/p1/truth.json --reference " + w + "/ref/reference.json --radii 0,0.01 --t1 20 " +
             "--direction lower --config " + w + "/cfg.json --out " + w + "/b1") == 0,
         "lower-only bounds exit 0");
  {
    const std::string csv = slurp(w + "/b1/bounds.csv");
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    std::getline(ss, line);
    std::stringstream rs(line);
    std::string delta, lower, upper;
    std::getline(rs, delta, ',');
    std::getline(rs, lower, ',');
    std::getline(rs, upper, ',');
    expect(upper.empty(), "upper column empty under --direction lower");
  }

  // default ladder has 14 rows
  write(w + "/cfg_tiny.json", R"({"mcmc_steps": 4, "opt_steps": 1, "seed": 3})");
  expect(run(bin + " bounds --mode raw-eot --problem " + w + "/raw.json --out " + w +
             "/missing_problem") == 2,
         "missing problem file exits 2");
  write(w + "/raw.json", R"({
    "f0": {"grids": [[0,1],[0,1]], "tensor": [0.45, 0.05, 0.05, 0.45]},
    "scalar": [1.0, -0.5, 0.2, 0.4]})");
  expect(run(bin + " bounds --mode raw-eot --problem " + w + "/raw.json --config " + w +
             "/cfg_tiny.json --out " + w + "/b2") == 0,
         "raw-eot bounds exit 0");
  expect(count_lines(slurp(w + "/b2/bounds.csv")) == 15, "default ladder emits 14 rows");

  // --- sensitivity reports -------------------------------------------------
  expect(run(bin + " sensitivity local --curve " + w + "/b2/bounds.csv --delta0 0 --out " + w +
             "/s1") == 0,
         "sensitivity local exits 0");
  expect(fs::exists(w + "/s1/sensitivity_local.json"), "local report written");
  expect(run(bin + " sensitivity global --curve " + w + "/b2/bounds.csv --out " + w + "/s2") == 0,
         "sensitivity global exits 0");
  {
    const std::string rep = slurp(w + "/s2/sensitivity_global.json");
    expect(rep.find("config_hash") != std::string::npos, "report echoes the config hash");
    expect(rep.find("flattened") != std::string::npos, "global report has the flattening flag");
  }
  expect(run(bin + " sensitivity robustness --mode raw-eot --problem " + w +
             "/raw.json --thresholds 0.6 --config " + w + "/cfg.json --out " + w + "/s3") == 0,
         "sensitivity robustness exits 0");
  expect(run(bin + " sensitivity local --curve " + w + "/nope.csv") == 2,
         "missing curve exits 2");

  // --- raw solver commands -------------------------------------------------
  write(w + "/eot.json", R"({
    "grids": [[0,1],[0,1]],
    "cost": [0.0, 1.0, 1.0, 0.0],
    "marginals": [{"grid": [0,1], "weights": [0.5,0.5]},
                   {"grid": [0,1], "weights": [0.5,0.5]}],
    "lambda_kl": 1.0})");
  expect(run(bin + " eot-solve --problem " + w + "/eot.json --out " + w + "/eot_sol.json") == 0,
         "eot-solve exits 0");
  expect(fs::exists(w + "/eot_sol.json"), "eot solution written");

  write(w + "/bridge.json", R"({
    "f0": {"grid": [0,1], "initial": [0.4, 0.6],
            "kernels": [[[0.7,0.3],[0.2,0.8]], [[0.6,0.4],[0.5,0.5]]]},
    "cost_steps": [[0.0, 0.5, -0.2, 0.1], [0.3, -0.1, 0.0, 0.2]],
    "lambda_kl": 0.8})");
  expect(run(bin + " bridge-solve --problem " + w + "/bridge.json --out " + w +
             "/bridge_sol.json") == 0,
         "bridge-solve exits 0");
  expect(fs::exists(w + "/bridge_sol.json"), "bridge solution written");

  // --- ROBUSTDYN_SEED override --------------------------------------------
  expect(run("ROBUSTDYN_SEED=99 " + bin + " bounds --mode raw-eot --problem " + w +
             "/raw.json --radii 0,0.1 --config " + w + "/cfg.json --out " + w + "/b4") == 0,
         "env seed override accepted");
  {
    const std::string manifest = slurp(w + "/b4/manifest.json");
    expect(manifest.find("\"seed\": 99") != std::string::npos, "manifest records the env seed");
  }

  if (failures == 0) std::cout << "cli_tests: all passed\n";
  return failures == 0 ? 0 : 1;
}
