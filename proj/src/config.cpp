#include "pdmp/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "pdmp/errors.hpp"

namespace pdmp {

namespace {

double as_double(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError(path + ": expected a number");
}

/// Object view that records consumed keys so leftovers can be rejected.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  /// Present and not null; a null value counts as a known key left at its default.
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": required key missing");
    return j_.at(key);
  }
  std::string where(const char* key) const { return path_ + "." + key; }

  void number(const char* key, double& out) {
    seen_.insert(key);
    if (has(key)) out = as_double(j_.at(key), where(key));
  }
  template <class Int>
  void integer(const char* key, Int& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) {
        out = v.get<Int>();
        return;
      }
      throw ConfigError(where(key) + ": expected a nonnegative integer");
    } else {
      out = v.get<Int>();
    }
  }
  void boolean(const char* key, bool& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
    out = j_.at(key).get<bool>();
  }
  void string(const char* key, std::string& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + ": expected a string");
    out = j_.at(key).get<std::string>();
  }
  void optional_number(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (has(key)) out = as_double(j_.at(key), where(key));
  }
  void optional_interval(const char* key, std::optional<Interval>& out);
  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Interval parse_interval(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(path + ": expected [lo, hi]");
  Interval w{as_double(v[0], path + "[0]"), as_double(v[1], path + "[1]")};
  if (!(w.lo < w.hi) || !std::isfinite(w.lo) || !std::isfinite(w.hi))
    throw ConfigError(path + ": expected finite lo < hi");
  return w;
}

void Block::optional_interval(const char* key, std::optional<Interval>& out) {
  seen_.insert(key);
  if (has(key)) out = parse_interval(j_.at(key), where(key));
}

FieldSpec parse_field(const json& v, const std::string& path) {
  Block b(v, path);
  FieldSpec f;
  b.string("type", f.type);
  if (f.type == "affine") {
    if (!b.has("slope") && !b.has("intercept")) throw ConfigError(path + ": affine field needs slope or intercept");
    b.number("slope", f.slope);
    b.number("intercept", f.intercept);
  } else if (f.type == "polynomial") {
    const json& c = b.at("coefficients");
    if (!c.is_array() || c.empty()) throw ConfigError(path + ".coefficients: expected a nonempty array");
    for (std::size_t k = 0; k < c.size(); ++k)
      f.coefficients.push_back(as_double(c[k], path + ".coefficients[" + std::to_string(k) + "]"));
  } else {
    throw ConfigError(path + ".type: expected 'affine' or 'polynomial'");
  }
  b.finish();
  return f;
}

Eigen::MatrixXd parse_rates(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a square array of rows");
  const int n = static_cast<int>(v.size());
  Eigen::MatrixXd r(n, n);
  for (int i = 0; i < n; ++i) {
    const std::string row = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || static_cast<int>(v[i].size()) != n) throw ConfigError(row + ": expected " + std::to_string(n) + " entries");
    for (int j = 0; j < n; ++j) r(i, j) = as_double(v[i][j], row + "[" + std::to_string(j) + "]");
  }
  return r;
}

json interval_json(Interval w) { return json::array({w.lo, w.hi}); }

}  // namespace

VectorField FieldSpec::build() const {
  if (type == "affine") return VectorField::affine(slope, intercept);
  return VectorField::polynomial(coefficients);
}

SwitchingSystem RunConfig::build_system() const {
  std::vector<VectorField> f;
  for (const auto& s : fields) f.push_back(s.build());
  return SwitchingSystem(std::move(f), SwitchingRates(rates), window);
}

bool RunConfig::operator==(const RunConfig& o) const {
  return schema_version == o.schema_version && fields == o.fields && rates.rows() == o.rates.rows() &&
         rates.cols() == o.rates.cols() && rates == o.rates && window == o.window && simulate == o.simulate &&
         solve == o.solve && asymptotics == o.asymptotics && validate == o.validate && output == o.output;
}

RunConfig parse_config(const json& doc) {
  RunConfig c;
  Block top(doc, "$");
  top.integer("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("$.schema_version: unsupported version " + std::to_string(c.schema_version));

  {
    Block sys(top.at("system"), "$.system");
    const json& fields = sys.at("fields");
    if (!fields.is_array() || fields.empty()) throw ConfigError("$.system.fields: expected a nonempty array");
    for (std::size_t k = 0; k < fields.size(); ++k)
      c.fields.push_back(parse_field(fields[k], "$.system.fields[" + std::to_string(k) + "]"));
    c.rates = parse_rates(sys.at("rates"), "$.system.rates");
    sys.finish();
  }
  c.window = parse_interval(top.at("window"), "$.window");

  if (top.has("simulate")) {
    Block b(top.at("simulate"), "$.simulate");
    auto& s = c.simulate;
    b.integer("seed", s.seed);
    b.number("t_max", s.t_max);
    b.number("burn_in", s.burn_in);
    b.integer("max_switches", s.max_switches);
    b.integer("replicas", s.replicas);
    b.optional_number("x0", s.x0);
    b.integer("i0", s.i0);
    b.optional_interval("range", s.range);
    if (b.has("bins")) {
      Block bins(b.at("bins"), "$.simulate.bins");
      bins.integer("linear", s.linear_bins);
      bins.integer("log_per_decade", s.log_bins_per_decade);
      bins.number("min_offset", s.bin_min_offset);
      bins.number("graded_zone", s.bin_graded_zone);
      bins.finish();
    }
    b.finish();
  }
  if (top.has("solve")) {
    Block b(top.at("solve"), "$.solve");
    auto& s = c.solve;
    if (b.has("mesh")) {
      Block m(b.at("mesh"), "$.solve.mesh");
      m.number("ratio", s.mesh_ratio);
      m.number("min_offset", s.mesh_min_offset);
      m.number("max_spacing", s.mesh_max_spacing);
      m.finish();
    }
    b.number("rtol", s.rtol);
    b.number("atol", s.atol);
    b.number("pf_horizon", s.pf_horizon);
    b.number("pf_tol", s.pf_tol);
    b.integer("max_iters", s.max_iters);
    b.number("certificate_tol", s.certificate_tol);
    b.integer("certificate_nodes", s.certificate_nodes);
    b.integer("residual_nodes", s.residual_nodes);
    if (b.has("tolerances")) {
      Block t(b.at("tolerances"), "$.solve.tolerances");
      t.number("flux_sum", s.flux_sum_tol);
      t.number("integral_residual", s.integral_residual_tol);
      t.number("representation", s.representation_tol);
      t.number("route_l1", s.route_l1_tol);
      t.finish();
    }
    b.finish();
  }
  if (top.has("asymptotics")) {
    Block b(top.at("asymptotics"), "$.asymptotics");
    auto& a = c.asymptotics;
    b.integer("K", a.K);
    b.number("epsilon_fraction", a.epsilon_fraction);
    b.number("delta_fraction", a.delta_fraction);
    b.number("resonance_tol", a.resonance_tol);
    if (b.has("fit_window")) {
      const json& w = b.at("fit_window");
      const Interval fw = parse_interval(w, "$.asymptotics.fit_window");
      a.fit_lo = fw.lo;
      a.fit_hi = fw.hi;
    }
    b.number("richardson_h", a.richardson_h);
    b.finish();
  }
  if (top.has("validate")) {
    Block b(top.at("validate"), "$.validate");
    auto& v = c.validate;
    b.number("exponent_rel_tol", v.exponent_rel_tol);
    b.number("limit_rel_tol", v.limit_rel_tol);
    b.number("log_ratio_tol", v.log_ratio_tol);
    if (b.has("log_window")) {
      const Interval lw = parse_interval(b.at("log_window"), "$.validate.log_window");
      v.log_lo = lw.lo;
      v.log_hi = lw.hi;
    }
    b.number("approach_tol", v.approach_tol);
    b.number("density_rel_tol", v.density_rel_tol);
    b.number("node_residual_tol", v.node_residual_tol);
    b.number("mc_l1_tol", v.mc_l1_tol);
    b.number("pf_l1_tol", v.pf_l1_tol);
    b.boolean("monte_carlo", v.monte_carlo);
    b.finish();
  }
  top.string("output", c.output);
  top.finish();

  const auto& s = c.simulate;
  if (s.replicas < 1) throw ConfigError("$.simulate.replicas: must be at least 1");
  if (!(s.burn_in >= 0) || !(s.t_max >= s.burn_in)) throw ConfigError("$.simulate: need 0 <= burn_in <= t_max");
  if (s.linear_bins < 1 || s.log_bins_per_decade < 1) throw ConfigError("$.simulate.bins: counts must be positive");
  if (c.solve.max_iters < 1) throw ConfigError("$.solve.max_iters: must be at least 1");
  if (c.asymptotics.K < 0) throw ConfigError("$.asymptotics.K: must be nonnegative");
  if (!(c.asymptotics.fit_lo > 0)) throw ConfigError("$.asymptotics.fit_window: lo must be positive");
  if (static_cast<int>(c.fields.size()) != c.rates.rows())
    throw ConfigError("$.system: number of fields does not match the rate matrix");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  json fields = json::array();
  for (const auto& f : c.fields) {
    json j;
    j["type"] = f.type;
    if (f.type == "affine") {
      j["slope"] = f.slope;
      j["intercept"] = f.intercept;
    } else {
      j["coefficients"] = f.coefficients;
    }
    fields.push_back(j);
  }
  json rates = json::array();
  for (int i = 0; i < c.rates.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < c.rates.cols(); ++j) row.push_back(c.rates(i, j));
    rates.push_back(row);
  }
  const auto& s = c.simulate;
  const auto& v = c.solve;
  const auto& a = c.asymptotics;
  const auto& val = c.validate;
  json doc;
  doc["schema_version"] = c.schema_version;
  doc["system"] = {{"fields", fields}, {"rates", rates}};
  doc["window"] = interval_json(c.window);
  doc["simulate"] = {{"seed", s.seed},
                     {"t_max", s.t_max},
                     {"burn_in", s.burn_in},
                     {"max_switches", s.max_switches},
                     {"replicas", s.replicas},
                     {"x0", s.x0 ? json(*s.x0) : json(nullptr)},
                     {"i0", s.i0},
                     {"range", s.range ? interval_json(*s.range) : json(nullptr)},
                     {"bins",
                      {{"linear", s.linear_bins},
                       {"log_per_decade", s.log_bins_per_decade},
                       {"min_offset", s.bin_min_offset},
                       {"graded_zone", s.bin_graded_zone}}}};
  doc["solve"] = {{"mesh", {{"ratio", v.mesh_ratio}, {"min_offset", v.mesh_min_offset}, {"max_spacing", v.mesh_max_spacing}}},
                  {"rtol", v.rtol},
                  {"atol", v.atol},
                  {"pf_horizon", v.pf_horizon},
                  {"pf_tol", v.pf_tol},
                  {"max_iters", v.max_iters},
                  {"certificate_tol", v.certificate_tol},
                  {"certificate_nodes", v.certificate_nodes},
                  {"residual_nodes", v.residual_nodes},
                  {"tolerances",
                   {{"flux_sum", v.flux_sum_tol},
                    {"integral_residual", v.integral_residual_tol},
                    {"representation", v.representation_tol},
                    {"route_l1", v.route_l1_tol}}}};
  doc["asymptotics"] = {{"K", a.K},
                        {"epsilon_fraction", a.epsilon_fraction},
                        {"delta_fraction", a.delta_fraction},
                        {"resonance_tol", a.resonance_tol},
                        {"fit_window", json::array({a.fit_lo, a.fit_hi})},
                        {"richardson_h", a.richardson_h}};
  doc["validate"] = {{"exponent_rel_tol", val.exponent_rel_tol},
                     {"limit_rel_tol", val.limit_rel_tol},
                     {"log_ratio_tol", val.log_ratio_tol},
                     {"log_window", json::array({val.log_lo, val.log_hi})},
                     {"approach_tol", val.approach_tol},
                     {"density_rel_tol", val.density_rel_tol},
                     {"node_residual_tol", val.node_residual_tol},
                     {"mc_l1_tol", val.mc_l1_tol},
                     {"pf_l1_tol", val.pf_l1_tol},
                     {"monte_carlo", val.monte_carlo}};
  doc["output"] = c.output;
  return doc;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

void dump_into(std::ostringstream& os, const json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{" << nl;
      bool first = true;
      for (const auto& item : j.items()) {
        if (!first) os << "," << nl;
        first = false;
        os << pad << json(item.key()).dump() << (indent > 0 ? ": " : ":");
        dump_into(os, item.value(), indent, depth + 1);
      }
      os << nl << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& e : j) flat = flat && !e.is_structured();
      os << "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) os << (flat ? ", " : ",");
        first = false;
        if (!flat) os << nl << pad;
        dump_into(os, e, indent, depth + 1);
      }
      if (!flat) os << nl << close;
      os << "]";
      return;
    }
    case json::value_t::number_float:
      os << format_double(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

}  // namespace

std::string dump_json(const json& doc, int indent) {
  std::ostringstream os;
  dump_into(os, doc, indent, 0);
  os << "\n";
  return os.str();
}

}  // namespace pdmp
