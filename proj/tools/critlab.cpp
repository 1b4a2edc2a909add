// Command-line front end. Every subcommand builds a one-experiment scenario
// and goes through the same runner as `run <config>`.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "critlab/io/scenario.hpp"

namespace {

using critlab::io::ScenarioConfig;

struct Flags {
  std::string fixture = "lat1";
  std::string potential = "none";
  std::optional<long long> x, y, x0, y0, y1;
  std::string t;
  double tol = 1e-8;
  int ambient = 0;
  std::string out;
  unsigned long long seed = 1;
  // subcommand extras
  std::string kind = "theorem";
  double tau = -1.0;
  std::string perturbation = "none";
  double eps = 0.1;
  double lo = 0.0, hi = 10.0;
  int level = -1;
  std::string lambda_grid;
};

void common(CLI::App* sub, Flags& f) {
  sub->add_option("--fixture", f.fixture, "lat1, lat1_geo(q), rad(d) or file:<path>");
  sub->add_option("--potential", f.potential, "potential file, or none / constant:c / indicator:v[:h]");
  sub->add_option("--x", f.x, "first vertex (default: exhaustion root)");
  sub->add_option("--y", f.y, "second vertex (default: x)");
  sub->add_option("--t", f.t, "time, or grid: geometric:a:b:n, linear:a:b:n, comma list");
  sub->add_option("--tol", f.tol, "tolerance on the standing assumption lambda0 >= 0");
  sub->add_option("--ambient-size", f.ambient, "ambient truncation (n_half or point count)");
  sub->add_option("--out", f.out, "directory for CSV and summary output");
  sub->add_option("--seed", f.seed, "RNG seed for sampled experiments");
}

ScenarioConfig to_config(const Flags& f, const std::string& experiment) {
  ScenarioConfig c;
  c.fixture = f.fixture;
  c.ambient = f.ambient;
  c.potential = f.potential;
  c.perturbation = f.perturbation;
  c.alpha = f.eps;
  c.lo = f.lo;
  c.hi = f.hi;
  c.level = f.level;
  c.experiments = {experiment};
  c.x = f.x;
  c.y = f.y;
  c.x0 = f.x0;
  c.y0 = f.y0;
  c.y1 = f.y1;
  c.tau = f.tau;
  if (!f.t.empty()) c.t_grid = critlab::io::parse_grid(f.t, "--t");
  if (!f.lambda_grid.empty()) c.lambda_grid = critlab::io::parse_grid(f.lambda_grid, "--lambda-grid");
  c.tol = f.tol;
  c.seed = f.seed;
  c.out_dir = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Criticality and heat-kernel experiments on weighted graphs"};
  app.require_subcommand(1);
  Flags f;
  std::string config_path;

  auto* classify = app.add_subcommand("classify", "subcritical / null-critical / positive-critical");
  auto* heat = app.add_subcommand("heat", "heat kernel k(x, y, t) as an exhaustion limit");
  auto* green = app.add_subcommand("green", "Green function G(x, y) as an exhaustion limit");
  auto* lambda0 = app.add_subcommand("lambda0", "generalized principal eigenvalue");
  auto* ratio = app.add_subcommand("ratio", "large-time ratio series");
  auto* perturb = app.add_subcommand("perturb", "Neumann series of P + eps V against the direct kernel");
  auto* coupling = app.add_subcommand("coupling", "critical coupling of P + alpha V");
  auto* run = app.add_subcommand("run", "run a scenario config file");
  for (auto* s : {classify, heat, green, lambda0, ratio, perturb, coupling}) common(s, f);

  ratio->add_option("--kind", f.kind, "theorem, resolvent, time_shift, davies or conjecture")
      ->check(CLI::IsMember({"theorem", "resolvent", "time_shift", "davies", "conjecture"}));
  ratio->add_option("--tau", f.tau, "time shift (negative)");
  ratio->add_option("--x0", f.x0, "reference vertex x0");
  ratio->add_option("--y0", f.y0, "reference vertex y0");
  ratio->add_option("--y1", f.y1, "reference vertex of the (Ass1m) estimate");
  ratio->add_option("--perturbation", f.perturbation, "V for the conjecture ratio (P+ = P + eps V)");
  ratio->add_option("--eps", f.eps, "coupling of V");
  ratio->add_option("--lambda-grid", f.lambda_grid, "lambda values below lambda0 (resolvent)");
  perturb->add_option("--perturbation", f.perturbation, "perturbing potential V")->required();
  perturb->add_option("--eps", f.eps, "coupling eps");
  perturb->add_option("--level", f.level, "exhaustion level to work on");
  coupling->add_option("--perturbation", f.perturbation, "potential V with V_- != 0")->required();
  coupling->add_option("--lo", f.lo, "lower end of the coupling bracket");
  coupling->add_option("--hi", f.hi, "upper end of the coupling bracket");
  run->add_option("config", config_path, "INI scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : critlab::io::kValidation;
  }

  try {
    if (run->parsed()) return critlab::io::run_scenario_file(config_path, std::cout);
    std::string experiment;
    if (classify->parsed()) experiment = "classify";
    if (heat->parsed()) experiment = "heat";
    if (green->parsed()) experiment = "green";
    if (lambda0->parsed()) experiment = "lambda0";
    if (perturb->parsed()) experiment = "perturb";
    if (coupling->parsed()) experiment = "coupling";
    if (ratio->parsed()) {
      if (f.kind == "theorem") experiment = "theorem_limit";
      if (f.kind == "resolvent") experiment = "resolvent_limit";
      if (f.kind == "time_shift") experiment = "time_shift";
      if (f.kind == "davies") experiment = "davies_ratio";
      if (f.kind == "conjecture") experiment = "conjecture";
    }
    return critlab::io::run_scenario(to_config(f, experiment), std::cout);
  } catch (const critlab::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return critlab::io::kValidation;
  }
}
