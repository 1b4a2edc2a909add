#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <string>
#include <vector>

#include "critlab/asymptotics.hpp"
#include "critlab/criticality.hpp"
#include "critlab/domain.hpp"
#include "critlab/errors.hpp"
#include "critlab/io/config.hpp"
#include "critlab/io/csv.hpp"
#include "critlab/kernel.hpp"
#include "critlab/operator.hpp"
#include "critlab/perturbation.hpp"

namespace critlab::io {

enum ExitCode : int { kOk = 0, kValidation = 2, kInconclusive = 3, kNumerical = 4 };

/// Resolved scenario: fixture, operator, perturbation and ambient indices of
/// the referenced vertices.
struct Context {
  DomainFixture fixture;
  EllipticOperator op;
  Potential v;
  int x, y, x0, y0, y1;
  std::vector<int> compact;

  const Exhaustion& exhaustion() const { return fixture.exhaustion; }
  const WeightedDomain& domain() const { return *fixture.domain; }
  Vertex label(int i) const { return domain().label(i); }
};

inline Context make_context(const ScenarioConfig& c) {
  DomainFixture f = make_fixture(c.fixture, c.ambient);
  const auto& d = *f.domain;
  EllipticOperator op = assemble(f.domain, parse_potential(c.potential, d));
  if (c.shift != 0.0) op = shift(op, c.shift);
  Potential v = parse_potential(c.perturbation, d);
  const auto& s1 = f.exhaustion.level(0);
  const int root = f.exhaustion.root();
  // Evaluation points only need to be covered by the exhaustion; reference
  // points must lie in S_1.
  auto resolve = [&](const std::optional<Vertex>& label, int fallback, const char* role, bool in_s1) {
    if (!label) return fallback;
    auto i = d.find(*label);
    if (!i) throw ValidationError(std::string(role) + " = " + std::to_string(*label) + " is not in the domain");
    if (in_s1 && !s1.contains(*i))
      throw ValidationError(std::string(role) + " = " + std::to_string(*label) + " is not in the first exhaustion level");
    if (f.exhaustion.first_level_containing({*i}) < 0)
      throw ValidationError(std::string(role) + " = " + std::to_string(*label) + " is not covered by the exhaustion");
    return *i;
  };
  const int x = resolve(c.x, root, "x", false);
  const int y = resolve(c.y, x, "y", false);
  const int x0 = resolve(c.x0, root, "x0", true);
  const int y0 = resolve(c.y0, x0, "y0", true);
  const int y1 = resolve(c.y1, y, "y1", false);
  std::vector<int> compact;
  for (Vertex l : c.compact) {
    auto i = d.find(l);
    if (!i) throw ValidationError("compact vertex " + std::to_string(l) + " is not in the domain");
    compact.push_back(*i);
  }
  return Context{std::move(f), std::move(op), std::move(v), x, y, x0, y0, y1, std::move(compact)};
}

namespace detail {

inline int perturbation_level(const ScenarioConfig& c, const Context& ctx) {
  if (c.level >= 0) return c.level;
  int best = 0;
  for (int j = 0; j < ctx.exhaustion().level_count(); ++j)
    if (ctx.exhaustion().level(j).size() <= 64) best = j;
  return best;
}

}  // namespace detail

/// Parameter checks that do not need any numerics, so a bad config fails
/// before anything is written.
inline void validate_experiments(const ScenarioConfig& c, const Context& ctx) {
  if (c.experiments.empty()) throw ValidationError("no experiment selected");
  for (const auto& k : c.experiments) {
    if (k == "time_shift") {
      if (!(c.tau < 0.0)) throw ValidationError("time_shift needs tau < 0");
      if (!c.t_grid.empty() && !(c.t_grid.front() > -c.tau))
        throw ValidationError("time_shift needs t_grid to start above |tau|");
    }
    if (k == "davies_ratio")
      for (int v : {ctx.x, ctx.y})
        if (!ctx.exhaustion().level(0).contains(v))
          throw ValidationError("davies_ratio: vertex " + std::to_string(ctx.label(v)) + " is not in S_1");
    if (k == "conjecture" && ctx.v.is_zero()) throw ValidationError("conjecture needs a [perturbation] potential");
    if ((k == "perturb" || k == "three_k") && ctx.v.is_zero())
      throw ValidationError(k + " needs a [perturbation] potential");
    if (k == "coupling") {
      if (!(c.lo < c.hi)) throw ValidationError("coupling needs lo < hi");
      if (ctx.v.negative_part().is_zero()) throw ValidationError("coupling needs a potential with V_- != 0");
    }
    if ((k == "perturb" || k == "three_k") && c.level >= ctx.exhaustion().level_count())
      throw ValidationError("perturbation level " + std::to_string(c.level) + " does not exist");
    if (k == "perturb" || k == "three_k") {
      const auto& s = ctx.exhaustion().level(detail::perturbation_level(c, ctx));
      for (int v : k == "perturb" ? std::vector<int>{ctx.x, ctx.y} : std::vector<int>{ctx.y1})
        if (!s.contains(v))
          throw ValidationError(k + ": vertex " + std::to_string(ctx.label(v)) + " is outside the perturbation level");
    }
  }
}

struct ExperimentOutput {
  std::string kind;
  Table table;
  Summary summary;
  int code = kOk;
};

namespace detail {

inline std::string plus_minus(double v, double e) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "%.10g ± %.2g", v, e);
  return buf;
}

inline void limit_summary(Summary& s, const std::string& key, const LimitResult& r) {
  s.add(key + "_status", to_string(r.status));
  s.add(key, r.value);
  s.add(key + "_error", r.error);
  s.add(key + "_level", r.level);
  s.add(key + "_evidence", r.evidence);
}

inline void series_output(ExperimentOutput& o, const RatioSeries& s) {
  o.table = Table({s.abscissa, "level", "value", "error"});
  for (std::size_t i = 0; i < s.t.size(); ++i) o.table.row(s.t[i], s.levels[i], s.values[i], s.errors[i]);
  o.summary.add("series", s.name);
  o.summary.add("status", to_string(s.status));
  o.summary.add("limit", plus_minus(s.limit, s.limit_error));
  o.summary.add("model", s.model);
  o.summary.add("trend", plus_minus(s.trend, s.trend_width));
  o.summary.add("exponential", s.exponential);
  if (s.exponential) o.summary.add("rate", s.rate);
  o.summary.add("points", static_cast<int>(s.t.size()));
  o.summary.add("excluded", static_cast<int>(s.excluded.size()));
  if (std::isfinite(s.predicted)) o.summary.add("predicted", s.predicted);
  if (s.prediction_agrees) o.summary.add("prediction_agrees", *s.prediction_agrees);
  o.summary.add("evidence", s.evidence);
  if (s.status == SeriesStatus::Inconclusive) o.code = kInconclusive;
}

inline std::vector<double> grid_or(const ScenarioConfig& c, std::vector<double> fallback) {
  return c.t_grid.empty() ? fallback : c.t_grid;
}

inline CriticalityOptions criticality_options(const ScenarioConfig& c, const Context& ctx) {
  CriticalityOptions o;
  o.tol = c.tol;
  o.x0 = ctx.x0;
  return o;
}

}  // namespace detail

inline ExperimentOutput run_experiment(const std::string& kind, const ScenarioConfig& c, const Context& ctx) {
  ExperimentOutput o;
  o.kind = kind;
  const auto& e = ctx.exhaustion();
  const auto& P = ctx.op;
  o.summary.add("experiment", kind);
  o.summary.add("fixture", ctx.fixture.name);

  if (kind == "classify") {
    auto rep = classify(P, e, detail::criticality_options(c, ctx));
    o.table = Table({"level", "lambda0_j", "green_j", "mass_j"});
    for (const auto& d : rep.diagnostics) o.table.row(d.level, d.lambda0, d.green, d.mass);
    o.summary.add("classification", to_string(rep.classification));
    o.summary.add("lambda0", detail::plus_minus(rep.lambda0.value, rep.lambda0.error));
    o.summary.add("x0", static_cast<int>(ctx.label(rep.x0)));
    detail::limit_summary(o.summary, "green", rep.green);
    if (is_critical(rep.classification)) detail::limit_summary(o.summary, "mass", rep.mass);
    if (std::isfinite(rep.green_ratio_gap)) o.summary.add("green_ratio_gap", rep.green_ratio_gap);
  } else if (kind == "lambda0") {
    auto r = lambda0(P, e);
    o.table = Table({"level", "lambda0_j"});
    for (std::size_t k = 0; k < r.history.size(); ++k) o.table.row(r.levels[k], r.history[k]);
    o.summary.add("lambda0", detail::plus_minus(r.value, r.error));
    o.summary.add("extrapolated", r.extrapolated);
  } else if (kind == "heat") {
    HeatKernelEvaluator ev(P, e);
    o.table = Table({"t", "level", "value", "error", "status"});
    int unconverged = 0;
    for (double t : detail::grid_or(c, {1.0})) {
      auto r = ev.heat_kernel_at(ctx.x, ctx.y, t);
      o.table.row(t, r.level, r.value, r.error, std::string(to_string(r.status)));
      if (!r.converged()) ++unconverged;
    }
    o.summary.add("x", static_cast<int>(ctx.label(ctx.x)));
    o.summary.add("y", static_cast<int>(ctx.label(ctx.y)));
    o.summary.add("unconverged_points", unconverged);
    for (const auto& r : o.table.rows()) o.summary.add("k(t=" + r[0] + ")", r[2] + " [" + r[4] + "]");
    if (unconverged) o.code = kInconclusive;
  } else if (kind == "green") {
    HeatKernelEvaluator ev(P, e);
    auto r = ev.green_at(ctx.x, ctx.y);
    o.table = Table({"level", "green_j"});
    for (std::size_t k = 0; k < r.history.size(); ++k) o.table.row(r.levels[k], r.history[k]);
    detail::limit_summary(o.summary, "green", r);
    if (r.status == LimitStatus::Inconclusive) o.code = kInconclusive;
  } else if (kind == "theorem_limit") {
    auto rep = classify(P, e, detail::criticality_options(c, ctx));
    HeatKernelEvaluator ev(P, e);
    o.summary.add("classification", to_string(rep.classification));
    detail::series_output(o, theorem_limit_series(ev, rep, ctx.label(ctx.x), ctx.label(ctx.y),
                                                  detail::grid_or(c, default_t_grid())));
  } else if (kind == "resolvent_limit") {
    auto l0 = lambda0(P, e);
    detail::series_output(o, resolvent_limit(P, e, ctx.label(ctx.x), ctx.label(ctx.y), l0.value, c.lambda_grid));
  } else if (kind == "time_shift") {
    HeatKernelEvaluator ev(P, e);
    std::optional<double> l0;
    if (P.symmetric()) l0 = lambda0(P, e).value;
    detail::series_output(o, time_shift_ratio_series(ev, ctx.label(ctx.x), ctx.label(ctx.y), c.tau, c.t_grid, l0));
  } else if (kind == "davies_ratio") {
    HeatKernelEvaluator ev(P, e);
    std::optional<CriticalityReport> rep;
    try {
      rep = classify(P, e, detail::criticality_options(c, ctx));
    } catch (const InconclusiveError&) {
    }
    detail::series_output(o, davies_ratio_series(ev, ctx.label(ctx.x), ctx.label(ctx.y), ctx.label(ctx.x0),
                                                 ctx.label(ctx.y0), detail::grid_or(c, default_t_grid()),
                                                 rep ? &*rep : nullptr));
  } else if (kind == "conjecture") {
    HeatKernelEvaluator zero(P, e), plus(perturb(P, ctx.v, c.alpha), e);
    ConjectureOptions opt;
    opt.t_grid = c.t_grid;
    for (int i : ctx.compact) opt.compact.push_back(ctx.label(i));
    opt.y1 = ctx.label(ctx.y1);
    opt.classify = detail::criticality_options(c, ctx);
    auto r = conjecture_ratio_series(plus, zero, ctx.label(ctx.x), ctx.label(ctx.y), opt);
    detail::series_output(o, r.series);
    o.summary.add("decreasing_from", r.decreasing_from);
    o.summary.add("uniform_status", to_string(r.uniform.status));
    o.summary.add("uniform_trend", detail::plus_minus(r.uniform.trend, r.uniform.trend_width));
    o.summary.add("ass1m_C", r.ass1m.C);
    for (std::size_t k = 0; k < r.ass1m.x.size(); ++k)
      o.summary.add("ass1m_T(" + std::to_string(r.ass1m.x[k]) + ")", r.ass1m.onset[k]);
  } else if (kind == "perturb") {
    const int level = detail::perturbation_level(c, ctx);
    const auto& s = e.level(level);
    IteratedKernelStack st(P, ctx.v, s, 64);
    const EllipticOperator pe = perturb(P, ctx.v, c.alpha);
    o.table = Table({"t", "neumann", "direct", "rel_diff", "terms", "duhamel_residual"});
    double worst = 0.0, worst_duhamel = 0.0;
    bool all_converged = true;
    const Vertex lx = ctx.label(ctx.x), ly = ctx.label(ctx.y);
    for (double t : detail::grid_or(c, {0.5, 1.0, 2.0, 5.0})) {
      auto n = neumann_heat_kernel(st, c.alpha, lx, ly, t);
      const double direct = heat_kernel_finite(pe, s, lx, ly, t);
      const double rel = std::abs(n.value - direct) / std::abs(direct);
      auto dr = duhamel_residual(P, ctx.v, c.alpha, s, lx, ly, t);
      o.table.row(t, n.value, direct, rel, n.terms_used, dr.residual);
      worst = std::max(worst, rel);
      worst_duhamel = std::max(worst_duhamel, dr.residual);
      all_converged = all_converged && n.converged;
    }
    o.summary.add("level", level);
    o.summary.add("level_size", s.size());
    o.summary.add("eps", c.alpha);
    o.summary.add("max_rel_diff", worst);
    o.summary.add("max_duhamel_residual", worst_duhamel);
    o.summary.add("series_converged", all_converged);
    if (!all_converged) o.code = kInconclusive;
  } else if (kind == "coupling") {
    auto r = critical_coupling(P, ctx.v, e, c.lo, c.hi);
    o.table = Table({"level", "alpha0_j"});
    for (std::size_t k = 0; k < r.levels.history.size(); ++k) o.table.row(r.levels.levels[k], r.levels.history[k]);
    o.summary.add("alpha0", detail::plus_minus(r.alpha0, r.error));
    o.summary.add("status", to_string(r.levels.status));
    if (std::isfinite(r.oracle)) {
      o.summary.add("birman_schwinger", r.oracle);
      o.summary.add("oracle_rel_diff", r.oracle_rel_diff);
      o.summary.add("oracle_agrees", r.oracle_agrees);
    }
    if (!r.finding.empty()) o.summary.add("finding", r.finding);
    if (!r.levels.converged()) o.code = kInconclusive;
  } else if (kind == "three_k") {
    const int level = detail::perturbation_level(c, ctx);
    ThreeKSampleSpec spec;
    spec.t_grid = c.t_grid;
    spec.ys = {ctx.y1};
    auto r = three_k_constant(P, ctx.v, e.level(level), spec);
    o.table = Table({"t", "max_ratio"});
    for (std::size_t k = 0; k < r.t.size(); ++k) o.table.row(r.t[k], r.max_ratio[k]);
    o.summary.add("level", level);
    o.summary.add("C", r.C);
    o.summary.add("slope", r.slope);
    o.summary.add("verdict", r.unbounded ? "unbounded" : "bounded");
    o.summary.add("note", "C is a sampled lower bound of the supremum; conclusions needing an upper bound are conditional");
  } else {
    throw ValidationError("unknown experiment '" + kind + "'");
  }
  return o;
}

/// Runs one experiment and maps failures onto exit codes.
inline ExperimentOutput run_guarded(const std::string& kind, const ScenarioConfig& c, const Context& ctx) {
  try {
    return run_experiment(kind, c, ctx);
  } catch (const std::exception& ex) {
    ExperimentOutput o;
    o.kind = kind;
    o.summary.add("experiment", kind);
    if (dynamic_cast<const ValidationError*>(&ex))
      o.code = kValidation;
    else if (dynamic_cast<const InconclusiveError*>(&ex))
      o.code = kInconclusive;
    else
      o.code = kNumerical;
    o.summary.add("error", ex.what());
    return o;
  }
}

/// Hard errors outrank validation errors, which outrank inconclusive results.
inline int combine_codes(const std::vector<ExperimentOutput>& outs) {
  int code = kOk;
  auto rank = [](int c) { return c == kNumerical ? 3 : c == kValidation ? 2 : c == kInconclusive ? 1 : 0; };
  for (const auto& o : outs)
    if (rank(o.code) > rank(code)) code = o.code;
  return code;
}

/// Writes `<prefix><kind>.csv` per experiment and `<prefix>summary.txt`.
inline void write_outputs(const std::string& dir, const std::string& prefix,
                          const std::vector<ExperimentOutput>& outs) {
  std::filesystem::create_directories(dir);
  std::ofstream sum(std::filesystem::path(dir) / (prefix + "summary.txt"), std::ios::binary);
  if (!sum) throw ValidationError("cannot write to " + dir);
  for (const auto& o : outs) {
    if (!o.table.empty()) write_file((std::filesystem::path(dir) / (prefix + o.kind + ".csv")).string(), o.table);
    sum << '[' << o.kind << "]\n";
    o.summary.write(sum);
    sum << "exit_code=" << o.code << "\n\n";
  }
}

/// Validates, runs the experiments concurrently (each with its own caches),
/// and writes the artifacts. Summaries are echoed to `log`.
inline int run_scenario(const ScenarioConfig& c, std::ostream& log) {
  std::optional<Context> ctx;
  try {
    ctx.emplace(make_context(c));
    validate_experiments(c, *ctx);
  } catch (const ValidationError& ex) {
    log << "validation error: " << ex.what() << '\n';
    return kValidation;
  }
  std::vector<std::future<ExperimentOutput>> jobs;
  for (const auto& k : c.experiments)
    jobs.push_back(std::async(std::launch::async, [&, k] { return run_guarded(k, c, *ctx); }));
  std::vector<ExperimentOutput> outs;
  for (auto& j : jobs) outs.push_back(j.get());
  for (const auto& o : outs) {
    log << '[' << o.kind << "]\n";
    o.summary.write(log);
  }
  if (!c.out_dir.empty()) {
    try {
      write_outputs(c.out_dir, c.prefix, outs);
    } catch (const std::exception& ex) {
      log << "output error: " << ex.what() << '\n';
      return kValidation;
    }
  }
  return combine_codes(outs);
}

inline int run_scenario_file(const std::string& path, std::ostream& log) {
  ScenarioConfig c;
  try {
    c = load_config(path);
  } catch (const ValidationError& ex) {
    log << "validation error: " << ex.what() << '\n';
    return kValidation;
  }
  return run_scenario(c, log);
}

}  // namespace critlab::io
