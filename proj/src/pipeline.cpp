#include "pdmp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/quadrature.hpp"
#include "pdmp/representation.hpp"

namespace pdmp {

namespace fs = std::filesystem;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json interval_json(Interval w) { return json::array({w.lo, w.hi}); }

json set_json(const MinimalInvariantSet& s, const Interval& window) {
  json j;
  if (s.kind == SetKind::singleton) {
    j["kind"] = "singleton";
    j["point"] = s.point;
    j["point_mass"] = true;
    return j;
  }
  j["kind"] = "open_interval";
  j["left"] = s.left.order_key();
  j["right"] = s.right.order_key();
  j["left_critical"] = s.left_critical;
  j["right_critical"] = s.right_critical;
  j["window_truncated"] = s.window_truncated;
  j["working_interval"] = interval_json(s.working_interval(window));
  return j;
}

std::string set_label(const MinimalInvariantSet& s) {
  char buf[128];
  if (s.kind == SetKind::singleton) {
    std::snprintf(buf, sizeof buf, "{%.17g}", s.point);
  } else {
    std::snprintf(buf, sizeof buf, "(%.17g, %.17g)", s.left.order_key(), s.right.order_key());
  }
  return buf;
}

void write_text(const fs::path& path, const std::string& text, CommandResult& res) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
  res.files.push_back(path);
}

void write_json(const fs::path& path, const json& doc, CommandResult& res) { write_text(path, dump_json(doc), res); }

RunConfig effective(const RunConfig& config, const CommandOptions& o) {
  RunConfig c = config;
  if (o.seed) c.simulate.seed = *o.seed;
  return c;
}

void write_provenance(const std::string& command, const RunConfig& config, const CommandOptions& o,
                      CommandResult& res) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["command"] = command;
  doc["threads"] = o.threads;
  doc["seed_override"] = o.seed ? json(*o.seed) : json(nullptr);
  doc["config"] = to_json(config);
  write_json(o.out / "provenance.json", doc, res);
}

void prepare(const CommandOptions& o) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + o.out.string() + "': " + ec.message());
}

std::vector<std::string> truncation_warnings(const std::vector<MinimalInvariantSet>& sets) {
  std::vector<std::string> w;
  for (const auto& s : sets)
    if (s.window_truncated)
      w.push_back("invariant set " + set_label(s) + " extends beyond the analysis window; results are window-clipped");
  return w;
}

/// Critical points of a set's closure with the sides that look into the set.
std::vector<std::pair<double, Side>> critical_sides(const SwitchingSystem& system, const MinimalInvariantSet& set,
                                                    const Interval& window) {
  std::vector<std::pair<double, Side>> out;
  if (set.kind != SetKind::open_interval) return out;
  const Interval I = set.working_interval(window);
  for (double c : system.all_critical_points()) {
    if (c < I.lo || c > I.hi) continue;
    const bool at_left = set.left.is_finite() && c == set.left.value;
    const bool at_right = set.right.is_finite() && c == set.right.value;
    if (!at_right && c < I.hi) out.emplace_back(c, Side::right);
    if (!at_left && c > I.lo) out.emplace_back(c, Side::left);
  }
  return out;
}

struct SetRun {
  MinimalInvariantSet set;
  Interval working;
  std::optional<FluxSolution> flux;
  std::optional<FixedPointResult> pf;
};

std::vector<SetRun> solve_sets(const SwitchingSystem& system, const std::vector<MinimalInvariantSet>& sets,
                               const RunConfig& c, int threads, bool fixed_point) {
  std::vector<SetRun> runs;
  for (const auto& s : sets) {
    SetRun r{s, s.working_interval(system.window()), std::nullopt, std::nullopt};
    if (s.kind == SetKind::open_interval) {
      r.flux.emplace(solve_flux_ode(system, s, flux_options(c)));
      if (fixed_point) {
        const auto init = uniform_density(system.n(), r.flux->grid.nodes, r.working);
        r.pf = iterate_to_fixed_point(system, init, fixed_point_options(c, threads));
      }
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

json fit_json(const ExponentFit& f) {
  return {{"exponent", f.exponent},         {"exponent_stderr", f.exponent_stderr},
          {"prefactor", f.prefactor},       {"used", f.used},
          {"excluded", f.excluded},         {"power_rms", f.power_rms},
          {"log_rms", f.log_rms},           {"log_slope", f.log_slope},
          {"log_intercept", f.log_intercept}, {"log_preferred", f.log_preferred},
          {"slope_drift", f.slope_drift},   {"unstable", f.unstable}};
}

json representation_json(const SwitchingSystem& system, const DensityGrid& grid, double xi, Side side,
                         double delta_fraction, bool appendix) {
  json j{{"xi", xi}, {"side", to_string(side)}};
  try {
    const auto lin = linearize_at_critical(system, xi, side, delta_fraction);
    const double eta = 0.5 * lin.delta;
    const auto r = appendix ? appendix_identity_check(system, grid, lin, eta) : representation_check(system, grid, lin, eta);
    j["eta"] = eta;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["residual"] = r.residual;
    j["truncated"] = r.truncated;
    j["tail_bound"] = r.tail_bound;
  } catch (const std::exception& e) {
    j["residual"] = nullptr;
    j["note"] = e.what();
  }
  return j;
}

OccupationRun run_simulation(const SwitchingSystem& system, const RunConfig& c, int threads, double x0,
                             Interval range) {
  SimConfig sc;
  sc.seed = c.simulate.seed;
  sc.t_max = c.simulate.t_max;
  sc.burn_in = c.simulate.burn_in;
  sc.max_switches = c.simulate.max_switches;
  sc.replicas = c.simulate.replicas;
  sc.threads = threads;
  BinSpec bs{c.simulate.linear_bins, c.simulate.log_bins_per_decade, c.simulate.bin_min_offset,
             c.simulate.bin_graded_zone};
  std::vector<double> crit;
  for (double x : system.all_critical_points())
    if (x >= range.lo && x <= range.hi) crit.push_back(x);
  return occupation_density(system, x0, c.simulate.i0, sc, graded_bin_edges(range, crit, bs));
}

/// Start point and histogram range of the simulation.
std::pair<double, Interval> simulation_domain(const SwitchingSystem& system,
                                              const std::vector<MinimalInvariantSet>& sets, const RunConfig& c) {
  const Interval window = system.window();
  std::optional<double> x0 = c.simulate.x0;
  if (!x0) {
    for (const auto& s : sets)
      if (s.kind == SetKind::open_interval) {
        x0 = s.working_interval(window).center();
        break;
      }
  }
  if (!x0) x0 = window.center();
  if (c.simulate.range) return {*x0, *c.simulate.range};
  for (const auto& s : sets)
    if (s.kind == SetKind::open_interval && s.contains(*x0)) return {*x0, s.working_interval(window)};
  return {*x0, window};
}

const SetRun* run_containing(const std::vector<SetRun>& runs, double x) {
  for (const auto& r : runs)
    if (r.flux && r.set.contains(x)) return &r;
  return nullptr;
}

}  // namespace

FluxSolveOptions flux_options(const RunConfig& c) {
  FluxSolveOptions o;
  o.mesh = c.solve.mesh();
  o.frobenius_order = c.asymptotics.K;
  o.rtol = c.solve.rtol;
  o.atol = c.solve.atol;
  o.resonance_tol = c.asymptotics.resonance_tol;
  o.delta_fraction = c.asymptotics.delta_fraction;
  o.epsilon_fraction = c.asymptotics.epsilon_fraction;
  return o;
}

AsymptoticsOptions asymptotics_options(const RunConfig& c) {
  AsymptoticsOptions o;
  o.fit_lo = c.asymptotics.fit_lo;
  o.fit_hi = c.asymptotics.fit_hi;
  o.richardson_h = c.asymptotics.richardson_h;
  o.delta_fraction = c.asymptotics.delta_fraction;
  return o;
}

FixedPointOptions fixed_point_options(const RunConfig& c, int threads) {
  FixedPointOptions o;
  o.horizon = c.solve.pf_horizon;
  o.tol = c.solve.pf_tol;
  o.max_iters = c.solve.max_iters;
  o.threads = threads;
  o.certificate_tol = c.solve.certificate_tol;
  o.certificate_nodes = c.solve.certificate_nodes;
  return o;
}

json structure_report(const SwitchingSystem& system) {
  const auto sets = minimal_invariant_sets(system);
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["window"] = interval_json(system.window());
  json js = json::array();
  for (const auto& s : sets) js.push_back(set_json(s, system.window()));
  doc["minimal_invariant_sets"] = js;

  json cps = json::array();
  for (double x : system.all_critical_points()) {
    json j{{"position", x}};
    const auto fields = system.fields_critical_at(x);
    j["fields"] = fields;
    j["uniformly_critical"] = static_cast<int>(fields.size()) == system.n();
    try {
      const auto pc = principal_case(system, x, sets);
      j["case"] = to_string(pc.kase);
      j["placement"] = to_string(pc.placement);
      j["side"] = to_string(pc.side);
      j["right_case"] = to_string(classify_critical_point(system, x, sets, Side::right).kase);
      j["left_case"] = to_string(classify_critical_point(system, x, sets, Side::left).kase);
    } catch (const UnsupportedConfiguration& e) {
      j["case"] = nullptr;
      j["note"] = e.what();
    }
    cps.push_back(j);
  }
  doc["critical_points"] = cps;

  const auto ex = existence_criterion(system);
  json coeffs = json::array();
  for (const auto& a : ex.contraction_coefficients) coeffs.push_back(opt(a));
  doc["existence"] = {{"jump_chain_stationary", vec(ex.jump_chain_stationary)},
                      {"contraction_coefficients", coeffs},
                      {"mean_contraction", opt(ex.mean_contraction)},
                      {"conclusive", ex.conclusive},
                      {"exists", ex.exists},
                      {"note", ex.note}};
  doc["warnings"] = truncation_warnings(sets);
  return doc;
}

json to_json(const CriticalPointReport& r) {
  const auto& lin = r.linearization;
  json j;
  j["xi"] = lin.xi;
  j["side"] = lin.sigma > 0 ? "right" : "left";
  j["field_index"] = lin.field_index;
  j["a"] = lin.a;
  j["delta"] = lin.delta;
  j["vartheta"] = lin.vartheta.order_key();
  j["r_inf"] = lin.r_inf;
  j["rho_bar0"] = opt(lin.rho_bar0);
  j["case"] = to_string(r.kase);
  j["lambda1"] = r.lambda1;
  j["classification"] = {{"kind", to_string(r.form.kind)},
                         {"exponent", r.form.exponent},
                         {"limit", opt(r.form.limit)},
                         {"bounded", r.form.bounded ? json(*r.form.bounded) : json(nullptr)},
                         {"resonant_critical", r.form.resonant_critical},
                         {"inconclusive", r.form.inconclusive},
                         {"note", r.form.note}};
  j["fit"] = r.fit ? fit_json(*r.fit) : json(nullptr);
  j["limit_extrapolated"] = opt(r.limit_extrapolated);
  j["prefactor_expansion"] = opt(r.prefactor_expansion);
  j["frobenius"] = {{"order", r.frobenius_order},
                    {"resonant", r.frobenius_resonant},
                    {"mu", r.mu},
                    {"epsilon", r.frobenius_epsilon},
                    {"validity_radius", r.frobenius_validity_radius}};
  j["notes"] = r.notes;
  return j;
}

LocalSamples histogram_local_samples(const OccupationHistogram& h, int state, double xi, int sigma) {
  LocalSamples s;
  const auto d = h.density();
  const auto& e = h.edges();
  for (int b = 0; b < h.bins(); ++b) {
    double lo = sigma * (e[b] - xi), hi = sigma * (e[b + 1] - xi);
    if (lo > hi) std::swap(lo, hi);
    if (lo < 0) continue;
    s.eta.push_back(lo > 0 ? std::sqrt(lo * hi) : 0.5 * hi);
    s.rho.push_back(d(state, b));
  }
  std::vector<int> idx(s.eta.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<int>(k);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s.eta[a] < s.eta[b]; });
  LocalSamples out;
  for (int k : idx) {
    out.eta.push_back(s.eta[k]);
    out.rho.push_back(s.rho[k]);
  }
  return out;
}

double histogram_l1(const OccupationHistogram& h, const DensityFunction& f) {
  const auto d = h.density();
  const auto& e = h.edges();
  double acc = 0;
  for (int i = 0; i < h.states(); ++i)
    for (int b = 0; b < h.bins(); ++b) {
      const double mass = numerics::integrate_tanh_sinh([&](double x, double) { return f(i, x); }, e[b], e[b + 1], 1e-10);
      acc += std::abs(d(i, b) * (e[b + 1] - e[b]) - mass);
    }
  if (h.total_time() > 0) acc += (h.underflow().sum() + h.overflow().sum()) / h.total_time();
  return acc;
}

void write_histogram_csv(std::ostream& os, const OccupationHistogram& h) {
  os << "state,bin_left,bin_right,occupation_time,density_estimate\n";
  if (!(h.total_time() > 0)) return;
  const auto d = h.density();
  const auto& e = h.edges();
  char buf[160];
  for (int i = 0; i < h.states(); ++i)
    for (int b = 0; b < h.bins(); ++b) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", i, e[b], e[b + 1], h.occupation()(i, b), d(i, b));
      os << buf;
    }
}

DensityGrid read_density_csv(std::istream& is, Interval interval, const std::vector<double>& breaks) {
  std::string line;
  if (!std::getline(is, line) || line != "state,eta,rho,flux")
    throw ConfigError("density CSV: expected header 'state,eta,rho,flux'");
  std::map<int, std::vector<std::array<double, 3>>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    int state = 0;
    double eta = 0, rho = 0, flux = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &state, &eta, &rho, &flux) != 4)
      throw ConfigError("density CSV: malformed line " + std::to_string(lineno));
    rows[state].push_back({eta, rho, flux});
  }
  if (rows.empty()) throw ConfigError("density CSV: no rows");
  const int n = rows.rbegin()->first + 1;
  if (rows.begin()->first != 0 || static_cast<int>(rows.size()) != n)
    throw ConfigError("density CSV: states must be 0..n-1");
  DensityGrid g;
  g.interval = interval;
  for (const auto& r : rows.at(0)) g.nodes.push_back(r[0]);
  const int N = static_cast<int>(g.nodes.size());
  g.rho.resize(n, N);
  g.flux.resize(n, N);
  for (const auto& [i, rs] : rows) {
    if (static_cast<int>(rs.size()) != N) throw ConfigError("density CSV: states have different node counts");
    for (int j = 0; j < N; ++j) {
      if (rs[j][0] != g.nodes[j]) throw ConfigError("density CSV: states use different nodes");
      g.rho(i, j) = rs[j][1];
      g.flux(i, j) = rs[j][2];
    }
  }
  for (int j = 1; j < N; ++j)
    if (!(g.nodes[j] > g.nodes[j - 1])) throw ConfigError("density CSV: nodes must increase strictly");
  const auto w = piecewise_weights(g.nodes, interval, breaks);
  g.mass = g.rho * Eigen::Map<const Eigen::VectorXd>(w.data(), N);
  g.normalization = g.mass.sum();
  return g;
}

CommandResult cmd_analyze(const RunConfig& config, const CommandOptions& o) {
  CommandResult res;
  prepare(o);
  const auto system = config.build_system();
  res.report = structure_report(system);
  for (const auto& w : res.report["warnings"]) res.warnings.push_back(w.get<std::string>());
  write_json(o.out / "structure.json", res.report, res);
  write_provenance("analyze", effective(config, o), o, res);
  return res;
}

CommandResult cmd_simulate(const RunConfig& config, const CommandOptions& o) {
  CommandResult res;
  prepare(o);
  const RunConfig c = effective(config, o);
  const auto system = c.build_system();
  const auto sets = minimal_invariant_sets(system);
  res.warnings = truncation_warnings(sets);
  const auto [x0, range] = simulation_domain(system, sets, c);

  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["x0"] = x0;
  doc["i0"] = c.simulate.i0;
  doc["range"] = interval_json(range);
  std::ostringstream csv;
  if (c.simulate.t_max == c.simulate.burn_in) {
    res.warnings.emplace_back("t_max equals burn_in: every sample is discarded, histogram is empty");
    write_histogram_csv(csv, OccupationHistogram(system.n(), {range.lo, range.hi}));
    doc["total_time"] = 0.0;
    doc["switches"] = 0;
  } else {
    const auto run = run_simulation(system, c, o.threads, x0, range);
    const auto& h = run.histogram;
    write_histogram_csv(csv, h);
    doc["bins"] = h.bins();
    doc["total_time"] = h.total_time();
    doc["switches"] = run.total_switches;
    doc["window_exits"] = run.window_exits;
    doc["underflow"] = vec(h.underflow());
    doc["overflow"] = vec(h.overflow());
    json reps = json::array();
    for (const auto& r : run.replicas)
      reps.push_back({{"final_time", r.final_time},
                      {"final_position", r.final_position},
                      {"final_state", r.final_state},
                      {"switches", r.switches},
                      {"termination", to_string(r.termination)}});
    doc["replicas"] = reps;
    if (run.window_exits > 0)
      res.warnings.push_back(std::to_string(run.window_exits) + " trajectories left the analysis window and were terminated");
    if (h.underflow().sum() + h.overflow().sum() > 0)
      res.warnings.emplace_back("occupation outside the histogram range was collected in overflow bins");
  }
  doc["warnings"] = res.warnings;
  res.report = doc;
  write_text(o.out / "histogram.csv", csv.str(), res);
  write_json(o.out / "simulate.json", doc, res);
  write_provenance("simulate", c, o, res);
  return res;
}

CommandResult cmd_solve(const RunConfig& config, const CommandOptions& o) {
  CommandResult res;
  prepare(o);
  const RunConfig c = effective(config, o);
  const auto system = c.build_system();
  const auto sets = minimal_invariant_sets(system);
  res.warnings = truncation_warnings(sets);
  const auto runs = solve_sets(system, sets, c, o.threads, true);
  const auto& tol = c.solve;

  std::ostringstream csv;
  csv << "state,eta,rho,flux\n";
  json jsets = json::array();
  for (const auto& r : runs) {
    json j = set_json(r.set, system.window());
    if (!r.flux) {
      jsets.push_back(j);
      continue;
    }
    const auto& fl = *r.flux;
    std::ostringstream part;
    write_density_csv(part, fl.grid);
    csv << part.str().substr(part.str().find('\n') + 1);

    const auto& d = fl.diagnostics;
    j["flux_route"] = {{"nodes", fl.grid.size()},
                       {"mass", vec(fl.grid.mass)},
                       {"anchor", d.anchor},
                       {"tail_mass_estimate", d.tail_mass_estimate},
                       {"min_interior_density", d.min_interior_density},
                       {"frobenius_fallback", d.frobenius_fallback},
                       {"warnings", d.warnings}};
    const double horizon = r.pf ? r.pf->horizon : default_horizon(system);
    std::vector<double> sub;
    for (int k : subsample(fl.grid.size(), tol.residual_nodes)) sub.push_back(fl.grid.nodes[k]);
    const auto dens = fl.density();
    const double l41 = integral_equation_residual(system, dens, sub, r.working, horizon, KernelMode::truncated);
    const double l42 = integral_equation_residual(system, dens, sub, r.working, tol.certificate_tol, KernelMode::infinite);
    json rep = json::array(), app = json::array();
    double worst_rep = 0;
    for (const auto& [xi, side] : critical_sides(system, r.set, system.window())) {
      rep.push_back(representation_json(system, fl.grid, xi, side, c.asymptotics.delta_fraction, false));
      app.push_back(representation_json(system, fl.grid, xi, side, c.asymptotics.delta_fraction, true));
      for (const json* e : {&rep.back(), &app.back()})
        if ((*e)["residual"].is_number()) worst_rep = std::max(worst_rep, (*e)["residual"].get<double>());
    }
    j["residuals"] = {{"flux_sum_deviation", d.flux_sum_deviation},
                      {"integral_equation_truncated", l41},
                      {"integral_equation_infinite", l42},
                      {"representation", rep},
                      {"appendix_identity", app}};
    json within{{"flux_sum_deviation", d.flux_sum_deviation <= tol.flux_sum_tol},
                {"integral_equation_truncated", l41 <= tol.integral_residual_tol},
                {"integral_equation_infinite", l42 <= tol.integral_residual_tol},
                {"representation", worst_rep <= tol.representation_tol}};
    if (r.pf) {
      const auto& pf = *r.pf;
      const double l1 = l1_change(pf.grid, fl.grid);
      j["fixed_point_route"] = {{"iterations", pf.iterations},
                                {"converged", pf.converged},
                                {"last_change", pf.last_change},
                                {"horizon", pf.horizon},
                                {"truncated_rows", pf.truncated_rows},
                                {"truncated_residual", pf.truncated_residual},
                                {"infinite_residual", pf.infinite_residual},
                                {"l1_vs_flux_route", l1},
                                {"warnings", pf.warnings}};
      within["route_l1"] = l1 <= tol.route_l1_tol;
      for (const auto& w : pf.warnings) res.warnings.push_back(w);
    }
    j["tolerances"] = {{"flux_sum_deviation", tol.flux_sum_tol},
                       {"integral_equation", tol.integral_residual_tol},
                       {"representation", tol.representation_tol},
                       {"route_l1", tol.route_l1_tol}};
    j["within_tolerance"] = within;
    for (const auto& w : d.warnings) res.warnings.push_back(w);
    jsets.push_back(j);
  }
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["sets"] = jsets;
  doc["warnings"] = res.warnings;
  res.report = doc;
  write_text(o.out / "density.csv", csv.str(), res);
  write_json(o.out / "residuals.json", doc, res);
  write_provenance("solve", c, o, res);
  return res;
}

CommandResult cmd_asymptotics(const RunConfig& config, const CommandOptions& o) {
  CommandResult res;
  prepare(o);
  const RunConfig c = effective(config, o);
  const auto system = c.build_system();
  const auto sets = minimal_invariant_sets(system);
  res.warnings = truncation_warnings(sets);
  const auto runs = solve_sets(system, sets, c, o.threads, false);
  json points = json::array();
  for (const auto& r : runs) {
    if (!r.flux) continue;
    for (const auto& [xi, side] : critical_sides(system, r.set, system.window())) {
      try {
        json j = to_json(analyze_critical_point(system, *r.flux, sets, xi, side, asymptotics_options(c)));
        j["set"] = set_label(r.set);
        if (j["classification"]["resonant_critical"].get<bool>())
          res.warnings.push_back("resonant critical point at " + format_double(xi) + ": lambda_1 equals a");
        points.push_back(j);
      } catch (const UnsupportedConfiguration& e) {
        points.push_back({{"xi", xi}, {"side", to_string(side)}, {"set", set_label(r.set)}, {"unsupported", e.what()}});
      }
    }
  }
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["critical_points"] = points;
  doc["warnings"] = res.warnings;
  res.report = doc;
  write_json(o.out / "asymptotics.json", doc, res);
  write_provenance("asymptotics", c, o, res);
  return res;
}

namespace {

struct CheckList {
  json items = json::array();
  bool failed = false;
  void add(std::string name, const std::string& route, std::optional<double> measured, std::optional<double> predicted,
           double tolerance, bool pass, std::string detail = {}) {
    items.push_back({{"check", std::move(name)},
                     {"route", route},
                     {"measured", opt(measured)},
                     {"predicted", opt(predicted)},
                     {"tolerance", tolerance},
                     {"status", pass ? "PASS" : "FAIL"},
                     {"detail", std::move(detail)}});
    failed = failed || !pass;
  }
  void skip(std::string name, std::string detail) {
    items.push_back({{"check", std::move(name)}, {"status", "SKIP"}, {"detail", std::move(detail)}});
  }
};

std::string locate(int state, double x) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "state %d at eta = %.17g", state, x);
  return buf;
}

void check_exponent(CheckList& cl, const std::string& name, const std::string& route, const ExponentFit& f,
                    double predicted, double rel_tol) {
  const double tol = rel_tol * std::max(std::abs(predicted), 1e-12);
  cl.add(name, route, f.exponent, predicted, tol, std::abs(f.exponent - predicted) <= tol,
         "fit on " + std::to_string(f.used) + " samples");
}

void validate_supplied_density(CheckList& cl, const SwitchingSystem& system, const RunConfig& c,
                               const std::vector<SetRun>& runs, const std::string& path, int threads) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open density file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  // Locate the set from the first node.
  std::istringstream probe(buf.str());
  std::string line;
  std::getline(probe, line);
  std::getline(probe, line);
  double x = 0;
  if (std::sscanf(line.c_str(), "%*d,%lf", &x) != 1) throw ConfigError("density CSV: no data rows");
  const SetRun* run = nullptr;
  for (const auto& r : runs)
    if (r.flux && x >= r.working.lo && x <= r.working.hi) run = &r;
  if (!run) throw ConfigError("density CSV: nodes lie outside every invariant interval");
  std::vector<double> breaks;
  for (double b : system.all_critical_points())
    if (b >= run->working.lo && b <= run->working.hi) breaks.push_back(b);
  std::istringstream is(buf.str());
  const auto g = read_density_csv(is, run->working, breaks);
  if (g.states() != system.n()) throw ConfigError("density CSV: state count does not match the system");

  // Nonnegativity.
  int neg_i = -1, neg_j = -1;
  for (int i = 0; i < g.states() && neg_i < 0; ++i)
    for (int j = 0; j < g.size(); ++j)
      if (g.rho(i, j) < 0) {
        neg_i = i;
        neg_j = j;
        break;
      }
  cl.add("supplied_density_nonnegative", "input", std::nullopt, std::nullopt, 0.0, neg_i < 0,
         neg_i < 0 ? "" : "negative value at " + locate(neg_i, g.nodes[neg_j]));

  // Pointwise agreement with the solved density.
  double worst = 0;
  int wi = 0, wj = 0;
  for (int i = 0; i < g.states(); ++i) {
    const double scale = g.rho.row(i).cwiseAbs().maxCoeff();
    for (int j = 0; j < g.size(); ++j) {
      const double ref = run->flux->rho_at(i, g.nodes[j]);
      const double dev = std::abs(g.rho(i, j) - ref) / std::max(std::abs(ref), 1e-12 * scale);
      if (dev > worst) {
        worst = dev;
        wi = i;
        wj = j;
      }
    }
  }
  cl.add("supplied_density_vs_flux_route", "input", worst, 0.0, c.validate.density_rel_tol,
         worst <= c.validate.density_rel_tol, "largest relative deviation at " + locate(wi, g.nodes[wj]));

  // One truncated integral-equation step on the supplied nodes.
  const double horizon = c.solve.pf_horizon > 0 ? c.solve.pf_horizon : default_horizon(system);
  const PerronFrobeniusOperator P(system, g.nodes, run->working, horizon, KernelMode::truncated, threads);
  const auto img = P.apply(g);
  worst = 0;
  for (int i = 0; i < g.states(); ++i) {
    const double scale = std::max(g.rho.row(i).cwiseAbs().maxCoeff(), 1e-300);
    for (int j = 0; j < g.size(); ++j) {
      const double dev = std::abs(img.rho(i, j) - g.rho(i, j)) / scale;
      if (dev > worst) {
        worst = dev;
        wi = i;
        wj = j;
      }
    }
  }
  cl.add("supplied_density_integral_equation", "input", worst, 0.0, c.validate.node_residual_tol,
         worst <= c.validate.node_residual_tol, "largest one-step residual at " + locate(wi, g.nodes[wj]));
}

}  // namespace

CommandResult cmd_validate(const RunConfig& config, const CommandOptions& o) {
  CommandResult res;
  prepare(o);
  const RunConfig c = effective(config, o);
  const auto system = c.build_system();
  const auto sets = minimal_invariant_sets(system);
  res.warnings = truncation_warnings(sets);
  const auto runs = solve_sets(system, sets, c, o.threads, true);
  const auto& v = c.validate;
  CheckList cl;

  std::optional<OccupationRun> mc;
  const SetRun* mc_run = nullptr;
  if (v.monte_carlo && c.simulate.t_max > c.simulate.burn_in) {
    const auto [x0, range] = simulation_domain(system, sets, c);
    mc_run = run_containing(runs, x0);
    if (mc_run) mc.emplace(run_simulation(system, c, o.threads, x0, range));
  }

  for (const auto& r : runs) {
    const std::string label = set_label(r.set);
    if (!r.flux) {
      cl.skip("density " + label, "singleton: point mass, no density");
      continue;
    }
    const auto& fl = *r.flux;
    const double fsd = fl.diagnostics.flux_sum_deviation;
    cl.add("flux_sum_constant " + label, "flux", fsd, 0.0, c.solve.flux_sum_tol, fsd <= c.solve.flux_sum_tol);
    if (r.pf) {
      const double l1 = l1_change(r.pf->grid, fl.grid);
      cl.add("fixed_point_vs_flux_l1 " + label, "fixed_point", l1, 0.0, v.pf_l1_tol, r.pf->converged && l1 <= v.pf_l1_tol,
             "iterations " + std::to_string(r.pf->iterations) + (r.pf->converged ? "" : ", not converged"));
    }
    const bool with_mc = mc && mc_run == &r;
    if (with_mc) {
      const double l1 = histogram_l1(mc->histogram, grid_density(system, fl.grid));
      cl.add("monte_carlo_vs_flux_l1 " + label, "monte_carlo", l1, 0.0, v.mc_l1_tol, l1 <= v.mc_l1_tol,
             std::to_string(mc->total_switches) + " switches");
    }

    for (const auto& [xi, side] : critical_sides(system, r.set, system.window())) {
      const std::string where = "at " + format_double(xi) + " looking " + to_string(side);
      CriticalPointReport rep;
      try {
        rep = analyze_critical_point(system, fl, sets, xi, side, asymptotics_options(c));
      } catch (const UnsupportedConfiguration& e) {
        cl.skip("asymptotics " + where, e.what());
        continue;
      }
      const auto& form = rep.form;
      const int k = rep.linearization.field_index, sigma = rep.linearization.sigma;
      if (form.inconclusive || rep.kase == CriticalCase::A) {
        cl.skip("asymptotics " + where, form.inconclusive ? "theory inconclusive here" : "case A");
        continue;
      }
      switch (form.kind) {
        case AsymptoticKind::power: {
          if (rep.fit) check_exponent(cl, "exponent " + where, "flux", *rep.fit, form.exponent, v.exponent_rel_tol);
          if (r.pf)
            check_exponent(cl, "exponent " + where, "fixed_point",
                           fit_exponent(r.pf->grid, k, xi, sigma, c.asymptotics.fit_lo, c.asymptotics.fit_hi),
                           form.exponent, v.exponent_rel_tol);
          if (with_mc) {
            const auto s = histogram_local_samples(mc->histogram, k, xi, sigma);
            try {
              const auto f = fit_exponent(s.eta, s.rho, c.asymptotics.fit_lo, c.asymptotics.fit_hi);
              if (f.excluded > 0)
                cl.skip("exponent " + where + " (monte_carlo)",
                        std::to_string(f.excluded) + " empty histogram bins in the fit window");
              else
                check_exponent(cl, "exponent " + where, "monte_carlo", f, form.exponent, v.exponent_rel_tol);
            } catch (const DomainError& e) {
              cl.skip("exponent " + where + " (monte_carlo)", e.what());
            }
          }
          break;
        }
        case AsymptoticKind::constant: {
          const std::optional<double> got = rep.limit_extrapolated;
          if (form.limit) {
            const double tol = v.limit_rel_tol * std::abs(*form.limit);
            cl.add("limit " + where, "flux", got, form.limit, tol, got && std::abs(*got - *form.limit) <= tol,
                   "predicted rho_bar(0) / (lambda_1 - a)");
          } else {
            // Positive limit without a closed form: compare against the extrapolated value.
            const double eta = c.asymptotics.fit_lo * rep.linearization.delta;
            const double near = fl.rho_at(k, xi + sigma * eta);
            const bool ok = got && *got > 0 && std::abs(near / *got - 1) <= v.approach_tol;
            cl.add("positive_limit " + where, "flux", near, got, v.approach_tol, ok,
                   "rho_k at eta = " + format_double(eta) + " against the extrapolated limit");
          }
          break;
        }
        case AsymptoticKind::log: {
          double lo = INFINITY, hi = -INFINITY;
          for (double e = v.log_lo; e <= v.log_hi * (1 + 1e-12); e *= std::pow(10.0, 0.25)) {
            const double q = fl.rho_at(k, xi + sigma * e) / -std::log(e);
            lo = std::min(lo, q);
            hi = std::max(hi, q);
          }
          const double spread = hi / lo - 1;
          cl.add("log_ratio_constant " + where, "flux", spread, 0.0, v.log_ratio_tol, lo > 0 && spread <= v.log_ratio_tol,
                 "max/min - 1 of rho_k / (-ln eta)");
          break;
        }
        case AsymptoticKind::zero:
        case AsymptoticKind::log_bounded_band:
          cl.skip("asymptotics " + where, std::string("no quantitative prediction for kind ") + to_string(form.kind));
          break;
      }
    }
  }
  if (o.density_path) validate_supplied_density(cl, system, c, runs, *o.density_path, o.threads);

  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["status"] = cl.failed ? "FAIL" : "PASS";
  doc["checks"] = cl.items;
  doc["warnings"] = res.warnings;
  res.report = doc;
  res.exit_code = cl.failed ? 3 : 0;
  write_json(o.out / "validation.json", doc, res);
  write_provenance("validate", c, o, res);
  return res;
}

}  // namespace pdmp
