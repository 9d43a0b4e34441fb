#pragma once

// File formats: JSON model documents, CSV observation files, JSON parameter
// files and CSV iteration traces.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "emmp/em.hpp"
#include "emmp/error.hpp"
#include "emmp/graph.hpp"
#include "emmp/models.hpp"

namespace emmp::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Strict JSON reading helpers. Every failure names the offending path.

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::SchemaError, path + ": " + what);
}

inline void only_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) schema_fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) schema_fail(path + "." + key, "unknown field '" + key + "'");
  }
}

inline const Json& field(const Json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) schema_fail(path, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) schema_fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::size_t get_count(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned()) schema_fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

/// Reals are JSON numbers; the strings "-inf" and "inf" stand for infinities.
inline double get_real(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
  }
  schema_fail(path, "expected a number");
}

inline Json put_real(double x) {
  if (std::isinf(x)) return x < 0 ? Json("-inf") : Json("inf");
  return Json(x);
}

inline std::vector<double> get_reals(const Json& j, const std::string& path) {
  if (!j.is_array()) schema_fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_real(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Json put_reals(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(put_real(x));
  return a;
}

inline std::vector<std::string> get_strings(const Json& j, const std::string& path) {
  if (!j.is_array()) schema_fail(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_string(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::string type_of(const Json& j, const std::string& path) { return get_string(field(j, path, "type"), path + ".type"); }

inline Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed JSON: ") + e.what());
  }
}

inline void check_version(const Json& doc) {
  const Json& v = field(doc, "$", "version");
  if (!v.is_number_integer() || v.get<long long>() != kFormatVersion)
    schema_fail("$.version", "unsupported version " + v.dump() + ", expected " + std::to_string(kFormatVersion));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Family / prior / kernel term (de)serialization.

inline Family parse_family(const Json& j, const std::string& path) {
  const std::string t = type_of(j, path);
  if (t == "categorical") {
    only_keys(j, path, {"type", "rows", "cols"});
    return CategoricalRows{get_count(field(j, path, "rows"), path + ".rows"), get_count(field(j, path, "cols"), path + ".cols")};
  }
  if (t == "gaussian_mean") {
    only_keys(j, path, {"type", "components", "sigma"});
    return GaussianMean{get_count(field(j, path, "components"), path + ".components"), get_real(field(j, path, "sigma"), path + ".sigma")};
  }
  if (t == "grid") {
    only_keys(j, path, {"type", "points"});
    return Grid{get_reals(field(j, path, "points"), path + ".points")};
  }
  schema_fail(path + ".type", "unknown family '" + t + "'");
}

inline Json dump_family(const Family& f) {
  if (auto* c = std::get_if<CategoricalRows>(&f)) return Json{{"type", "categorical"}, {"rows", c->rows}, {"cols", c->cols}};
  if (auto* g = std::get_if<GaussianMean>(&f)) return Json{{"type", "gaussian_mean"}, {"components", g->components}, {"sigma", put_real(g->sigma)}};
  return Json{{"type", "grid"}, {"points", put_reals(std::get<Grid>(f).points)}};
}

inline PriorSpec parse_prior(const Json& j, const std::string& path) {
  const std::string t = type_of(j, path);
  if (t == "flat") {
    only_keys(j, path, {"type"});
    return FlatPrior{};
  }
  if (t == "dirichlet") {
    only_keys(j, path, {"type", "alpha"});
    return DirichletRows{get_reals(field(j, path, "alpha"), path + ".alpha")};
  }
  if (t == "gaussian") {
    only_keys(j, path, {"type", "m0", "v0"});
    return GaussianPrior{get_reals(field(j, path, "m0"), path + ".m0"), get_reals(field(j, path, "v0"), path + ".v0")};
  }
  if (t == "grid_log") {
    only_keys(j, path, {"type", "log_values"});
    return GridLogPrior{get_reals(field(j, path, "log_values"), path + ".log_values")};
  }
  schema_fail(path + ".type", "unknown prior '" + t + "'");
}

inline Json dump_prior(const PriorSpec& p) {
  if (std::holds_alternative<FlatPrior>(p)) return Json{{"type", "flat"}};
  if (auto* d = std::get_if<DirichletRows>(&p)) return Json{{"type", "dirichlet"}, {"alpha", put_reals(d->alpha)}};
  if (auto* g = std::get_if<GaussianPrior>(&p)) return Json{{"type", "gaussian"}, {"m0", put_reals(g->m0)}, {"v0", put_reals(g->v0)}};
  return Json{{"type", "grid_log"}, {"log_values", put_reals(std::get<GridLogPrior>(p).log_values)}};
}

inline KernelTerm parse_term(const Json& j, const std::string& path) {
  const std::string t = type_of(j, path);
  if (t == "tabular") {
    only_keys(j, path, {"type", "values"});
    return TabularTerm{get_reals(field(j, path, "values"), path + ".values")};
  }
  if (t == "categorical") {
    only_keys(j, path, {"type", "parameter", "rows", "cols"});
    return CategoricalTerm{get_string(field(j, path, "parameter"), path + ".parameter"),
                           get_strings(field(j, path, "rows"), path + ".rows"), get_strings(field(j, path, "cols"), path + ".cols")};
  }
  if (t == "gaussian_emission") {
    only_keys(j, path, {"type", "parameter", "selector", "observation"});
    return GaussianEmissionTerm{get_string(field(j, path, "parameter"), path + ".parameter"),
                                get_string(field(j, path, "selector"), path + ".selector"),
                                get_string(field(j, path, "observation"), path + ".observation")};
  }
  if (t == "grid") {
    only_keys(j, path, {"type", "parameter", "values"});
    return GridTerm{get_string(field(j, path, "parameter"), path + ".parameter"), get_reals(field(j, path, "values"), path + ".values")};
  }
  schema_fail(path + ".type", "unknown kernel term '" + t + "'");
}

inline Json dump_term(const KernelTerm& term) {
  if (auto* t = std::get_if<TabularTerm>(&term)) return Json{{"type", "tabular"}, {"values", put_reals(t->values)}};
  if (auto* t = std::get_if<CategoricalTerm>(&term))
    return Json{{"type", "categorical"}, {"parameter", t->parameter}, {"rows", t->row_edges}, {"cols", t->col_edges}};
  if (auto* t = std::get_if<GaussianEmissionTerm>(&term))
    return Json{{"type", "gaussian_emission"}, {"parameter", t->parameter}, {"selector", t->selector}, {"observation", t->observation}};
  const auto& g = std::get<GridTerm>(term);
  return Json{{"type", "grid"}, {"parameter", g.parameter}, {"values", put_reals(g.values)}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model documents.

/// Parses a model document into a spec without building the graph.
inline ModelSpec parse_model_spec(std::string_view text) {
  using namespace detail;
  const Json doc = parse_json(text);
  only_keys(doc, "$", {"version", "variables", "parameters", "factors", "observations"});
  check_version(doc);
  ModelSpec spec;

  const Json& vars = field(doc, "$", "variables");
  if (!vars.is_array()) schema_fail("$.variables", "expected an array");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const std::string p = "$.variables[" + std::to_string(i) + "]";
    only_keys(vars[i], p, {"id", "cardinality"});
    spec.variables.push_back({get_string(field(vars[i], p, "id"), p + ".id"), get_count(field(vars[i], p, "cardinality"), p + ".cardinality")});
  }

  if (doc.contains("parameters")) {
    const Json& params = doc["parameters"];
    if (!params.is_array()) schema_fail("$.parameters", "expected an array");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string p = "$.parameters[" + std::to_string(i) + "]";
      only_keys(params[i], p, {"id", "family", "prior"});
      ParameterDecl d{get_string(field(params[i], p, "id"), p + ".id"), parse_family(field(params[i], p, "family"), p + ".family")};
      if (params[i].contains("prior")) d.prior = parse_prior(params[i]["prior"], p + ".prior");
      spec.parameters.push_back(std::move(d));
    }
  }

  const Json& factors = field(doc, "$", "factors");
  if (!factors.is_array()) schema_fail("$.factors", "expected an array");
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const std::string p = "$.factors[" + std::to_string(i) + "]";
    only_keys(factors[i], p, {"id", "edges", "kernel"});
    FactorDecl f{get_string(field(factors[i], p, "id"), p + ".id"), get_strings(field(factors[i], p, "edges"), p + ".edges"), {}};
    const Json& kernel = field(factors[i], p, "kernel");
    if (!kernel.is_array()) schema_fail(p + ".kernel", "expected an array of terms");
    for (std::size_t t = 0; t < kernel.size(); ++t) f.kernel.push_back(parse_term(kernel[t], p + ".kernel[" + std::to_string(t) + "]"));
    spec.factors.push_back(std::move(f));
  }

  if (doc.contains("observations")) {
    const Json& obs = doc["observations"];
    const std::string p = "$.observations";
    only_keys(obs, p, {"variables", "slots", "clamps", "values"});
    if (obs.contains("variables")) spec.observed_variables = get_strings(obs["variables"], p + ".variables");
    if (obs.contains("slots")) spec.observed_slots = get_strings(obs["slots"], p + ".slots");
    if (obs.contains("clamps")) {
      if (!obs["clamps"].is_object()) schema_fail(p + ".clamps", "expected an object");
      for (const auto& [k, v] : obs["clamps"].items()) spec.clamps[k] = get_count(v, p + ".clamps." + k);
    }
    if (obs.contains("values")) {
      if (!obs["values"].is_object()) schema_fail(p + ".values", "expected an object");
      for (const auto& [k, v] : obs["values"].items()) spec.slot_values[k] = get_real(v, p + ".values." + k);
    }
  }
  return spec;
}

inline ModelGraph parse_model(std::string_view text) { return build_graph(parse_model_spec(text)); }

/// Canonical form: fixed key order, two-space indent, shortest round-trip
/// decimal numbers, trailing newline.
inline std::string serialize_model(const ModelSpec& spec) {
  using namespace detail;
  Json doc;
  doc["version"] = kFormatVersion;
  doc["variables"] = Json::array();
  for (const auto& v : spec.variables) doc["variables"].push_back(Json{{"id", v.id}, {"cardinality", v.cardinality}});
  doc["parameters"] = Json::array();
  for (const auto& p : spec.parameters)
    doc["parameters"].push_back(Json{{"id", p.id}, {"family", dump_family(p.family)}, {"prior", dump_prior(p.prior)}});
  doc["factors"] = Json::array();
  for (const auto& f : spec.factors) {
    Json kernel = Json::array();
    for (const auto& t : f.kernel) kernel.push_back(dump_term(t));
    doc["factors"].push_back(Json{{"id", f.id}, {"edges", f.edges}, {"kernel", std::move(kernel)}});
  }
  Json obs;
  obs["variables"] = spec.observed_variables;
  obs["slots"] = spec.observed_slots;
  obs["clamps"] = Json::object();
  for (const auto& [k, v] : spec.clamps) obs["clamps"][k] = v;
  obs["values"] = Json::object();
  for (const auto& [k, v] : spec.slot_values) obs["values"][k] = put_real(v);
  doc["observations"] = std::move(obs);
  return doc.dump(2) + "\n";
}

inline std::string serialize_model(const ModelGraph& graph) { return serialize_model(graph.spec()); }

inline ModelSpec load_model_spec(const std::string& path) { return parse_model_spec(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Observation files: comma-separated, a header naming observed variables or
// slots, one dataset per row. Empty cells leave that entry unobserved.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest = line;
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) return out;
    rest.remove_prefix(comma + 1);
  }
}

}  // namespace detail

inline std::vector<Observations> parse_data(std::string_view text, const ModelSpec& schema) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  std::vector<int> kind;  // 0 discrete, 1 continuous
  std::vector<Observations> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv(line);
    const std::string where = "data line " + std::to_string(line_no);
    if (header.empty()) {
      header = cells;
      for (const auto& h : header) {
        if (std::find(schema.observed_variables.begin(), schema.observed_variables.end(), h) != schema.observed_variables.end()) {
          kind.push_back(0);
        } else if (std::find(schema.observed_slots.begin(), schema.observed_slots.end(), h) != schema.observed_slots.end()) {
          kind.push_back(1);
        } else {
          throw Error(ErrorCode::UnknownVariable, where + ": column '" + h + "' is not in the observation schema");
        }
        if (std::count(header.begin(), header.end(), h) > 1) throw Error(ErrorCode::DuplicateId, where + ": column '" + h + "' repeats");
      }
      continue;
    }
    if (cells.size() != header.size())
      throw Error(ErrorCode::SchemaError, where + ": expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    Observations obs;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      const std::string cell_where = where + ", column '" + header[c] + "'";
      std::size_t used = 0;
      try {
        if (kind[c] == 0) {
          if (cells[c].find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument("not a state index");
          obs.discrete[header[c]] = std::stoull(cells[c], &used);
        } else {
          obs.continuous[header[c]] = std::stod(cells[c], &used);
        }
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size()) throw Error(ErrorCode::InvalidValue, cell_where + ": cannot read '" + cells[c] + "'");
    }
    rows.push_back(std::move(obs));
  }
  return rows;
}

/// Binds a data file to a model: one row clamps the model directly, several
/// rows stack independent copies that share the parameters.
inline ModelGraph bind_data(const ModelSpec& model, const std::vector<Observations>& rows) {
  return build_graph(stack_datasets(model, rows));
}

// ---------------------------------------------------------------------------
// Parameter files: {"version": 1, "parameters": [{"id": ..., "value": ...}]}
// where a value is {"rows": [[...], ...]}, {"means": [...]} or {"index": k}.

inline Json dump_value(const ParamValue& v) {
  if (auto* c = std::get_if<CategoricalValue>(&v)) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < c->rows; ++r) {
      std::vector<double> row(c->table.begin() + static_cast<std::ptrdiff_t>(r * c->cols),
                              c->table.begin() + static_cast<std::ptrdiff_t>((r + 1) * c->cols));
      rows.push_back(detail::put_reals(row));
    }
    return Json{{"rows", std::move(rows)}};
  }
  if (auto* g = std::get_if<GaussianValue>(&v)) return Json{{"means", detail::put_reals(g->means)}};
  return Json{{"index", std::get<GridValue>(v).index}};
}

inline std::string serialize_theta(const ParamAssignment& theta) {
  Json doc;
  doc["version"] = kFormatVersion;
  doc["parameters"] = Json::array();
  for (const auto& [id, v] : theta) doc["parameters"].push_back(Json{{"id", id}, {"value", dump_value(v)}});
  return doc.dump(2) + "\n";
}

/// Reads a parameter file against `graph`. Parameters it omits take the
/// default initial value.
inline ParamAssignment parse_theta(std::string_view text, const ModelGraph& graph) {
  using namespace detail;
  const Json doc = parse_json(text);
  only_keys(doc, "$", {"version", "parameters"});
  check_version(doc);
  ParamAssignment theta = default_assignment(graph);
  const Json& params = field(doc, "$", "parameters");
  if (!params.is_array()) schema_fail("$.parameters", "expected an array");
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string p = "$.parameters[" + std::to_string(i) + "]";
    only_keys(params[i], p, {"id", "value"});
    const std::string id = get_string(field(params[i], p, "id"), p + ".id");
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) throw Error(ErrorCode::DuplicateId, p + ": parameter '" + id + "' repeats");
    seen.push_back(id);
    const auto idx = graph.parameter_index(id);
    if (!idx) throw Error(ErrorCode::DanglingReference, p + ": model declares no parameter '" + id + "'");
    const auto& decl = graph.parameter(*idx);
    const Json& v = field(params[i], p, "value");
    const std::string vp = p + ".value";
    if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
      only_keys(v, vp, {"rows"});
      const Json& rows = field(v, vp, "rows");
      if (!rows.is_array() || rows.size() != fam->rows) throw Error(ErrorCode::ArityMismatch, vp + ".rows: expected " + std::to_string(fam->rows) + " rows");
      CategoricalValue cv{fam->rows, fam->cols, {}};
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto row = get_reals(rows[r], vp + ".rows[" + std::to_string(r) + "]");
        if (row.size() != fam->cols) throw Error(ErrorCode::ArityMismatch, vp + ".rows[" + std::to_string(r) + "]: expected " + std::to_string(fam->cols) + " entries");
        cv.table.insert(cv.table.end(), row.begin(), row.end());
      }
      theta[id] = std::move(cv);
    } else if (std::holds_alternative<GaussianMean>(decl.family)) {
      only_keys(v, vp, {"means"});
      theta[id] = GaussianValue{get_reals(field(v, vp, "means"), vp + ".means")};
    } else {
      only_keys(v, vp, {"index"});
      theta[id] = GridValue{get_count(field(v, vp, "index"), vp + ".index")};
    }
  }
  check_assignment(graph, theta);
  return theta;
}

// ---------------------------------------------------------------------------
// Trace files.

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Column names for the flattened parameter values, in declaration order:
/// A[r][c] for tables, mu[i] for means, the bare id for grid parameters.
inline std::vector<std::string> theta_columns(const ModelGraph& graph) {
  std::vector<std::string> cols;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& d = graph.parameter(p);
    if (auto* c = std::get_if<CategoricalRows>(&d.family)) {
      for (std::size_t r = 0; r < c->rows; ++r)
        for (std::size_t k = 0; k < c->cols; ++k) cols.push_back(d.id + "[" + std::to_string(r) + "][" + std::to_string(k) + "]");
    } else if (auto* g = std::get_if<GaussianMean>(&d.family)) {
      for (std::size_t i = 0; i < g->components; ++i) cols.push_back(d.id + "[" + std::to_string(i) + "]");
    } else {
      cols.push_back(d.id);
    }
  }
  return cols;
}

/// Flattened values matching theta_columns; grid parameters report the grid point.
inline std::vector<double> flatten_theta(const ModelGraph& graph, const ParamAssignment& theta) {
  std::vector<double> out;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& d = graph.parameter(p);
    const auto& v = value_of(theta, d.id);
    if (auto* c = std::get_if<CategoricalValue>(&v)) {
      out.insert(out.end(), c->table.begin(), c->table.end());
    } else if (auto* g = std::get_if<GaussianValue>(&v)) {
      out.insert(out.end(), g->means.begin(), g->means.end());
    } else {
      out.push_back(std::get<Grid>(d.family).points[std::get<GridValue>(v).index]);
    }
  }
  return out;
}

inline std::string format_trace(const ModelGraph& graph, const EMTrace& trace) {
  std::string out = "iteration,log_f";
  for (const auto& c : theta_columns(graph)) out += "," + c;
  out += "\n";
  for (const auto& rec : trace.records) {
    out += std::to_string(rec.iteration) + "," + format_real(rec.log_f);
    for (double x : flatten_theta(graph, rec.theta)) out += "," + format_real(x);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exit codes shared by every command.

inline constexpr int kExitOk = 0;
inline constexpr int kExitModel = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitTooLarge = 4;
inline constexpr int kExitCheckFailed = 1;

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateEvidence:
    case ErrorCode::PriorZero:
    case ErrorCode::ZeroRow:
    case ErrorCode::ZeroWeight:
    case ErrorCode::AllNegInf:
    case ErrorCode::MonotonicityViolation:
      return kExitNumeric;
    case ErrorCode::TooLarge:
      return kExitTooLarge;
    default:
      return kExitModel;
  }
}

}  // namespace emmp::io
