#pragma once

// Forney-style factor graph model: variables live on edges, factors are nodes.
// A ModelGraph is built once from a declarative ModelSpec and never mutated;
// every transform (clamping, tying) returns a fresh graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "emmp/error.hpp"
#include "emmp/numeric.hpp"

namespace emmp {

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct VariableDecl {
  std::string id;
  std::size_t cardinality = 1;
  bool operator==(const VariableDecl&) const = default;
};

// Parameter families.
struct CategoricalRows {
  std::size_t rows = 1;
  std::size_t cols = 1;
  bool operator==(const CategoricalRows&) const = default;
};
struct GaussianMean {
  std::size_t components = 1;
  double sigma = 1.0;  // known standard deviation
  bool operator==(const GaussianMean&) const = default;
};
struct Grid {
  std::vector<double> points;  // strictly increasing
  bool operator==(const Grid&) const = default;
};
using Family = std::variant<CategoricalRows, GaussianMean, Grid>;

// Priors f_A, one per parameter (priors are separable across parameters).
struct FlatPrior {
  bool operator==(const FlatPrior&) const = default;
};
struct DirichletRows {
  std::vector<double> alpha;  // rows * cols, row-major
  bool operator==(const DirichletRows&) const = default;
};
struct GaussianPrior {
  std::vector<double> m0;  // per component
  std::vector<double> v0;  // per component, > 0
  bool operator==(const GaussianPrior&) const = default;
};
struct GridLogPrior {
  std::vector<double> log_values;  // per grid point, -inf allowed
  bool operator==(const GridLogPrior&) const = default;
};
using PriorSpec = std::variant<FlatPrior, DirichletRows, GaussianPrior, GridLogPrior>;

struct ParameterDecl {
  std::string id;
  Family family;
  PriorSpec prior = FlatPrior{};
  bool operator==(const ParameterDecl&) const = default;
};

// Kernel terms. A node's kernel is the product of its terms; a node with
// parameterized terms is a "generic node" g(z_1..z_m, theta).
struct TabularTerm {
  std::vector<double> values;  // one per joint local state, first edge most significant
  bool operator==(const TabularTerm&) const = default;
};
struct CategoricalTerm {
  std::string parameter;
  std::vector<std::string> row_edges;  // local edges selecting the table row
  std::vector<std::string> col_edges;  // local edges selecting the table column
  bool operator==(const CategoricalTerm&) const = default;
};
struct GaussianEmissionTerm {
  std::string parameter;
  std::string selector;     // local edge choosing the mean component
  std::string observation;  // slot holding the observed real value y_k
  bool operator==(const GaussianEmissionTerm&) const = default;
};
struct GridTerm {
  std::string parameter;
  std::vector<double> values;  // joint local state major, grid point minor
  bool operator==(const GridTerm&) const = default;
};
using KernelTerm = std::variant<TabularTerm, CategoricalTerm, GaussianEmissionTerm, GridTerm>;

struct FactorDecl {
  std::string id;
  std::vector<std::string> edges;
  std::vector<KernelTerm> kernel;
  bool operator==(const FactorDecl&) const = default;
};

struct ModelSpec {
  std::vector<VariableDecl> variables;
  std::vector<ParameterDecl> parameters;
  std::vector<FactorDecl> factors;
  // Observation schema: which discrete variables and continuous slots a dataset may fill.
  std::vector<std::string> observed_variables;
  std::vector<std::string> observed_slots;
  // Bound observations.
  std::map<std::string, std::size_t> clamps;
  std::map<std::string, double> slot_values;
  bool operator==(const ModelSpec&) const = default;
};

struct Observations {
  std::map<std::string, std::size_t> discrete;
  std::map<std::string, double> continuous;
};

// Parameter values (theta-hat).
struct CategoricalValue {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> table;  // row-major, rows sum to 1
  double at(std::size_t r, std::size_t c) const { return table[r * cols + c]; }
  bool operator==(const CategoricalValue&) const = default;
};
struct GaussianValue {
  std::vector<double> means;
  bool operator==(const GaussianValue&) const = default;
};
struct GridValue {
  std::size_t index = 0;
  bool operator==(const GridValue&) const = default;
};
using ParamValue = std::variant<CategoricalValue, GaussianValue, GridValue>;
using ParamAssignment = std::map<std::string, ParamValue>;

/// A kernel term with names resolved to node-local positions and indices.
struct ResolvedTerm {
  enum class Kind { Tabular, Categorical, GaussianEmission, Grid };
  Kind kind = Kind::Tabular;
  std::size_t term = 0;  // index into FactorDecl::kernel
  std::size_t parameter = kNone;
  std::vector<std::size_t> row_positions;
  std::vector<std::size_t> col_positions;
  std::size_t selector = kNone;
  std::string slot;
};

class ModelGraph;
ModelGraph build_graph(ModelSpec spec);

class ModelGraph {
 public:
  const ModelSpec& spec() const { return spec_; }

  std::size_t num_variables() const { return spec_.variables.size(); }
  std::size_t num_nodes() const { return spec_.factors.size(); }
  std::size_t num_parameters() const { return spec_.parameters.size(); }

  const VariableDecl& variable(std::size_t v) const { return spec_.variables[v]; }
  std::size_t cardinality(std::size_t v) const { return spec_.variables[v].cardinality; }
  const FactorDecl& node(std::size_t n) const { return spec_.factors[n]; }
  const ParameterDecl& parameter(std::size_t p) const { return spec_.parameters[p]; }

  /// Variables adjacent to a node, in local order.
  std::span<const std::size_t> node_edges(std::size_t n) const { return node_edges_[n]; }
  /// Cardinalities of a node's local variables.
  std::span<const std::size_t> local_radices(std::size_t n) const { return local_radices_[n]; }
  /// Nodes touching a variable (1 for a half-edge, 2 for an internal edge).
  std::span<const std::size_t> edge_nodes(std::size_t v) const { return edge_nodes_[v]; }
  std::span<const ResolvedTerm> terms(std::size_t n) const { return terms_[n]; }
  bool is_parameterized(std::size_t n) const {
    return std::any_of(terms_[n].begin(), terms_[n].end(),
                       [](const ResolvedTerm& t) { return t.kind != ResolvedTerm::Kind::Tabular; });
  }

  /// Indicator vector for a clamped variable, all ones otherwise.
  const std::vector<double>& evidence(std::size_t v) const { return evidence_[v]; }
  std::optional<std::size_t> clamp_of(std::size_t v) const {
    auto it = spec_.clamps.find(spec_.variables[v].id);
    if (it == spec_.clamps.end()) return std::nullopt;
    return it->second;
  }
  std::optional<double> slot_value(const std::string& slot) const {
    auto it = spec_.slot_values.find(slot);
    if (it == spec_.slot_values.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> variable_index(const std::string& id) const { return lookup(variable_ids_, id); }
  std::optional<std::size_t> node_index(const std::string& id) const { return lookup(node_ids_, id); }
  std::optional<std::size_t> parameter_index(const std::string& id) const { return lookup(parameter_ids_, id); }

  /// Connected components of the node/edge structure, each a sorted list of node indices.
  const std::vector<std::vector<std::size_t>>& components() const { return components_; }
  std::size_t component_of(std::size_t n) const { return component_of_[n]; }

  bool operator==(const ModelGraph& other) const { return spec_ == other.spec_; }

 private:
  friend ModelGraph build_graph(ModelSpec spec);

  static std::optional<std::size_t> lookup(const std::unordered_map<std::string, std::size_t>& m,
                                           const std::string& id) {
    auto it = m.find(id);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  ModelSpec spec_;
  std::unordered_map<std::string, std::size_t> variable_ids_, node_ids_, parameter_ids_;
  std::vector<std::vector<std::size_t>> node_edges_, local_radices_, edge_nodes_;
  std::vector<std::vector<ResolvedTerm>> terms_;
  std::vector<std::vector<double>> evidence_;
  std::vector<std::vector<std::size_t>> components_;
  std::vector<std::size_t> component_of_;
};

namespace detail {

inline std::size_t family_size(const Family& f) {
  if (auto* c = std::get_if<CategoricalRows>(&f)) return c->rows * c->cols;
  if (auto* g = std::get_if<GaussianMean>(&f)) return g->components;
  return std::get<Grid>(f).points.size();
}

inline void check_table(const std::vector<double>& values, const std::string& where) {
  bool any_positive = false;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::InvalidValue, where + ": table entries must be finite and nonnegative");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw Error(ErrorCode::EmptyFactor, where + ": table has no positive entry");
}

inline void check_parameter(const ParameterDecl& p) {
  const std::string where = "parameter '" + p.id + "'";
  std::visit(
      [&](const auto& fam) {
        using F = std::decay_t<decltype(fam)>;
        if constexpr (std::is_same_v<F, CategoricalRows>) {
          if (fam.rows == 0 || fam.cols == 0) throw Error(ErrorCode::InvalidValue, where + ": empty categorical table");
        } else if constexpr (std::is_same_v<F, GaussianMean>) {
          if (fam.components == 0) throw Error(ErrorCode::InvalidValue, where + ": no components");
          if (!(fam.sigma > 0.0) || !std::isfinite(fam.sigma)) throw Error(ErrorCode::InvalidValue, where + ": sigma must be positive");
        } else {
          if (fam.points.empty()) throw Error(ErrorCode::InvalidValue, where + ": empty grid");
          for (std::size_t i = 0; i < fam.points.size(); ++i) {
            if (!std::isfinite(fam.points[i])) throw Error(ErrorCode::InvalidValue, where + ": non-finite grid point");
            if (i > 0 && !(fam.points[i] > fam.points[i - 1]))
              throw Error(ErrorCode::InvalidValue, where + ": grid points must be strictly increasing");
          }
        }
      },
      p.family);

  std::visit(
      [&](const auto& prior) {
        using P = std::decay_t<decltype(prior)>;
        if constexpr (std::is_same_v<P, DirichletRows>) {
          if (!std::holds_alternative<CategoricalRows>(p.family))
            throw Error(ErrorCode::FamilyMismatch, where + ": Dirichlet prior needs a categorical family");
          if (prior.alpha.size() != family_size(p.family))
            throw Error(ErrorCode::ArityMismatch, where + ": Dirichlet alpha size differs from table size");
          for (double a : prior.alpha)
            if (!std::isfinite(a) || a < 0.0) throw Error(ErrorCode::InvalidValue, where + ": Dirichlet alpha must be >= 0");
        } else if constexpr (std::is_same_v<P, GaussianPrior>) {
          if (!std::holds_alternative<GaussianMean>(p.family))
            throw Error(ErrorCode::FamilyMismatch, where + ": Gaussian prior needs a Gaussian-mean family");
          const std::size_t k = family_size(p.family);
          if (prior.m0.size() != k || prior.v0.size() != k)
            throw Error(ErrorCode::ArityMismatch, where + ": Gaussian prior size differs from component count");
          for (std::size_t i = 0; i < k; ++i)
            if (!std::isfinite(prior.m0[i]) || !(prior.v0[i] > 0.0) || !std::isfinite(prior.v0[i]))
              throw Error(ErrorCode::InvalidValue, where + ": Gaussian prior needs finite m0 and v0 > 0");
        } else if constexpr (std::is_same_v<P, GridLogPrior>) {
          if (!std::holds_alternative<Grid>(p.family))
            throw Error(ErrorCode::FamilyMismatch, where + ": grid log-prior needs a grid family");
          if (prior.log_values.size() != family_size(p.family))
            throw Error(ErrorCode::ArityMismatch, where + ": grid log-prior length differs from grid length");
          bool any_finite = false;
          for (double v : prior.log_values) {
            if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
              throw Error(ErrorCode::InvalidValue, where + ": grid log-prior entries must be finite or -inf");
            any_finite = any_finite || std::isfinite(v);
          }
          if (!any_finite) throw Error(ErrorCode::InvalidValue, where + ": grid log-prior has no finite entry");
        }
      },
      p.prior);
}

struct UnionFind {
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
  std::vector<std::size_t> parent;
};

}  // namespace detail

/// Resolves and checks every cross-reference of a model description.
inline ModelGraph build_graph(ModelSpec spec) {
  ModelGraph g;

  for (std::size_t i = 0; i < spec.variables.size(); ++i) {
    const auto& v = spec.variables[i];
    if (v.cardinality == 0) throw Error(ErrorCode::InvalidValue, "variable '" + v.id + "': cardinality must be >= 1");
    if (!g.variable_ids_.emplace(v.id, i).second) throw Error(ErrorCode::DuplicateId, "variable '" + v.id + "'");
  }
  for (std::size_t i = 0; i < spec.parameters.size(); ++i) {
    const auto& p = spec.parameters[i];
    if (!g.parameter_ids_.emplace(p.id, i).second) throw Error(ErrorCode::DuplicateId, "parameter '" + p.id + "'");
    detail::check_parameter(p);
  }

  std::unordered_map<std::string, bool> slots;
  for (const auto& s : spec.observed_slots)
    if (!slots.emplace(s, true).second) throw Error(ErrorCode::DuplicateId, "observation slot '" + s + "'");
  for (const auto& v : spec.observed_variables)
    if (!g.variable_ids_.count(v)) throw Error(ErrorCode::DanglingReference, "observation schema names unknown variable '" + v + "'");

  const std::size_t nv = spec.variables.size();
  const std::size_t nn = spec.factors.size();
  g.node_edges_.resize(nn);
  g.local_radices_.resize(nn);
  g.terms_.resize(nn);
  g.edge_nodes_.assign(nv, {});

  for (std::size_t n = 0; n < nn; ++n) {
    const auto& f = spec.factors[n];
    const std::string where = "factor '" + f.id + "'";
    if (!g.node_ids_.emplace(f.id, n).second) throw Error(ErrorCode::DuplicateId, where);

    std::unordered_map<std::string, std::size_t> local;
    for (std::size_t j = 0; j < f.edges.size(); ++j) {
      auto vi = g.variable_ids_.find(f.edges[j]);
      if (vi == g.variable_ids_.end()) throw Error(ErrorCode::DanglingReference, where + " references undeclared variable '" + f.edges[j] + "'");
      if (!local.emplace(f.edges[j], j).second) throw Error(ErrorCode::DuplicateId, where + " lists variable '" + f.edges[j] + "' twice");
      g.node_edges_[n].push_back(vi->second);
      g.local_radices_[n].push_back(spec.variables[vi->second].cardinality);
      g.edge_nodes_[vi->second].push_back(n);
    }
    const std::size_t joint = product_of(g.local_radices_[n]);

    auto param_of = [&](const std::string& id, auto family_tag) -> std::size_t {
      auto pi = g.parameter_ids_.find(id);
      if (pi == g.parameter_ids_.end()) throw Error(ErrorCode::DanglingReference, where + " references undeclared parameter '" + id + "'");
      using Tag = decltype(family_tag);
      if (!std::holds_alternative<Tag>(spec.parameters[pi->second].family))
        throw Error(ErrorCode::FamilyMismatch, where + ": parameter '" + id + "' has the wrong family for this kernel term");
      return pi->second;
    };
    auto positions_of = [&](const std::vector<std::string>& names) {
      std::vector<std::size_t> out;
      for (const auto& name : names) {
        auto it = local.find(name);
        if (it == local.end()) throw Error(ErrorCode::DanglingReference, where + ": '" + name + "' is not one of its edges");
        out.push_back(it->second);
      }
      return out;
    };
    auto radix_product = [&](const std::vector<std::size_t>& pos) {
      std::size_t r = 1;
      for (std::size_t p : pos) r *= g.local_radices_[n][p];
      return r;
    };

    for (std::size_t t = 0; t < f.kernel.size(); ++t) {
      ResolvedTerm rt;
      rt.term = t;
      std::visit(
          [&](const auto& term) {
            using T = std::decay_t<decltype(term)>;
            if constexpr (std::is_same_v<T, TabularTerm>) {
              rt.kind = ResolvedTerm::Kind::Tabular;
              if (term.values.size() != joint) throw Error(ErrorCode::ArityMismatch, where + ": tabular size differs from joint state count");
              detail::check_table(term.values, where);
            } else if constexpr (std::is_same_v<T, CategoricalTerm>) {
              rt.kind = ResolvedTerm::Kind::Categorical;
              rt.parameter = param_of(term.parameter, CategoricalRows{});
              rt.row_positions = positions_of(term.row_edges);
              rt.col_positions = positions_of(term.col_edges);
              std::vector<std::size_t> all = rt.row_positions;
              all.insert(all.end(), rt.col_positions.begin(), rt.col_positions.end());
              std::sort(all.begin(), all.end());
              if (std::adjacent_find(all.begin(), all.end()) != all.end())
                throw Error(ErrorCode::DuplicateId, where + ": an edge is used twice in a categorical mapping");
              const auto& fam = std::get<CategoricalRows>(spec.parameters[rt.parameter].family);
              if (radix_product(rt.row_positions) != fam.rows || radix_product(rt.col_positions) != fam.cols)
                throw Error(ErrorCode::ArityMismatch, where + ": categorical mapping does not match table shape of '" + term.parameter + "'");
            } else if constexpr (std::is_same_v<T, GaussianEmissionTerm>) {
              rt.kind = ResolvedTerm::Kind::GaussianEmission;
              rt.parameter = param_of(term.parameter, GaussianMean{});
              rt.selector = positions_of({term.selector}).front();
              const auto& fam = std::get<GaussianMean>(spec.parameters[rt.parameter].family);
              if (g.local_radices_[n][rt.selector] != fam.components)
                throw Error(ErrorCode::ArityMismatch, where + ": selector cardinality differs from component count");
              if (!slots.count(term.observation))
                throw Error(ErrorCode::DanglingReference, where + ": observation slot '" + term.observation + "' is not declared");
              rt.slot = term.observation;
            } else {
              rt.kind = ResolvedTerm::Kind::Grid;
              rt.parameter = param_of(term.parameter, Grid{});
              const auto& fam = std::get<Grid>(spec.parameters[rt.parameter].family);
              if (term.values.size() != joint * fam.points.size())
                throw Error(ErrorCode::ArityMismatch, where + ": grid table size differs from joint states x grid points");
              detail::check_table(term.values, where);
            }
          },
          f.kernel[t]);
      g.terms_[n].push_back(std::move(rt));
    }
  }

  g.evidence_.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) g.evidence_[v].assign(spec.variables[v].cardinality, 1.0);
  for (const auto& [id, state] : spec.clamps) {
    auto vi = g.variable_ids_.find(id);
    if (vi == g.variable_ids_.end()) throw Error(ErrorCode::UnknownVariable, "clamp on unknown variable '" + id + "'");
    const std::size_t card = spec.variables[vi->second].cardinality;
    if (state >= card)
      throw Error(ErrorCode::OutOfRangeObservation,
                  "variable '" + id + "' has " + std::to_string(card) + " states, observed " + std::to_string(state));
    g.evidence_[vi->second].assign(card, 0.0);
    g.evidence_[vi->second][state] = 1.0;
  }
  for (const auto& [slot, y] : spec.slot_values) {
    if (!slots.count(slot)) throw Error(ErrorCode::UnknownVariable, "value for undeclared observation slot '" + slot + "'");
    if (!std::isfinite(y)) throw Error(ErrorCode::InvalidValue, "observation slot '" + slot + "' must be finite");
  }

  detail::UnionFind uf(nn);
  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t k = 1; k < g.edge_nodes_[v].size(); ++k) uf.unite(g.edge_nodes_[v][0], g.edge_nodes_[v][k]);
  g.component_of_.assign(nn, kNone);
  for (std::size_t n = 0; n < nn; ++n) {
    const std::size_t root = uf.find(n);
    if (g.component_of_[root] == kNone) {
      g.component_of_[root] = g.components_.size();
      g.components_.emplace_back();
    }
    g.component_of_[n] = g.component_of_[root];
    g.components_[g.component_of_[n]].push_back(n);
  }

  g.spec_ = std::move(spec);
  return g;
}

enum class Mode { Strict, Experimental };

struct ComponentReport {
  std::vector<std::string> nodes;
  bool is_tree = true;
};

struct ValidationReport {
  std::vector<ComponentReport> components;
  std::vector<std::string> degree_violations;
  std::vector<std::string> dangling_references;
  std::vector<std::string> cycles;  // one entry per cyclic component
  bool accepted = false;
};

/// Structural check of a model description. Never throws on structural
/// problems; they are listed in the report instead.
inline ValidationReport validate(const ModelSpec& spec, Mode mode) {
  ValidationReport report;
  std::unordered_map<std::string, std::size_t> var_ids, param_ids;
  for (std::size_t i = 0; i < spec.variables.size(); ++i) var_ids.emplace(spec.variables[i].id, i);
  for (std::size_t i = 0; i < spec.parameters.size(); ++i) param_ids.emplace(spec.parameters[i].id, i);

  std::vector<std::vector<std::size_t>> touching(spec.variables.size());
  for (std::size_t n = 0; n < spec.factors.size(); ++n) {
    const auto& f = spec.factors[n];
    for (const auto& e : f.edges) {
      auto it = var_ids.find(e);
      if (it == var_ids.end()) {
        report.dangling_references.push_back("factor '" + f.id + "' -> variable '" + e + "'");
      } else {
        touching[it->second].push_back(n);
      }
    }
    for (const auto& term : f.kernel) {
      const std::string* pid = std::visit(
          [](const auto& t) -> const std::string* {
            if constexpr (requires { t.parameter; }) return &t.parameter;
            return nullptr;
          },
          term);
      if (pid && !param_ids.count(*pid)) report.dangling_references.push_back("factor '" + f.id + "' -> parameter '" + *pid + "'");
    }
  }
  for (const auto& [id, state] : spec.clamps)
    if (!var_ids.count(id)) report.dangling_references.push_back("clamp -> variable '" + id + "'");

  detail::UnionFind uf(spec.factors.size());
  std::vector<std::size_t> internal_edges_at(spec.factors.size(), 0);
  for (std::size_t v = 0; v < spec.variables.size(); ++v) {
    const auto& t = touching[v];
    if (t.empty() || t.size() > 2) {
      report.degree_violations.push_back("variable '" + spec.variables[v].id + "' has degree " + std::to_string(t.size()));
    }
    for (std::size_t k = 1; k < t.size(); ++k) uf.unite(t[0], t[k]);
    if (t.size() == 2) ++internal_edges_at[t[0]];
  }

  std::map<std::size_t, std::size_t> comp_index;
  std::vector<std::size_t> comp_edges;
  for (std::size_t n = 0; n < spec.factors.size(); ++n) {
    const std::size_t root = uf.find(n);
    auto [it, fresh] = comp_index.emplace(root, report.components.size());
    if (fresh) {
      report.components.emplace_back();
      comp_edges.push_back(0);
    }
    report.components[it->second].nodes.push_back(spec.factors[n].id);
    comp_edges[it->second] += internal_edges_at[n];
  }
  for (std::size_t c = 0; c < report.components.size(); ++c) {
    auto& comp = report.components[c];
    comp.is_tree = comp_edges[c] + 1 == comp.nodes.size();
    if (!comp.is_tree) {
      std::string desc = "cycle among {";
      for (std::size_t i = 0; i < comp.nodes.size(); ++i) desc += (i ? ", " : "") + comp.nodes[i];
      report.cycles.push_back(desc + "}");
    }
  }

  const bool structural_ok = report.degree_violations.empty() && report.dangling_references.empty();
  report.accepted = structural_ok && (mode == Mode::Experimental || report.cycles.empty());
  return report;
}

inline ValidationReport validate(const ModelGraph& graph, Mode mode) { return validate(graph.spec(), mode); }

/// Binds observations; discrete ones become indicator evidence on their edge,
/// continuous ones fill the observation slots read by Gaussian emission terms.
inline ModelGraph clamp_observations(const ModelGraph& graph, const Observations& obs) {
  ModelSpec spec = graph.spec();
  for (const auto& [id, state] : obs.discrete) {
    auto v = graph.variable_index(id);
    if (!v) throw Error(ErrorCode::UnknownVariable, "cannot clamp unknown variable '" + id + "'");
    if (state >= graph.cardinality(*v))
      throw Error(ErrorCode::OutOfRangeObservation,
                  "variable '" + id + "' has " + std::to_string(graph.cardinality(*v)) + " states, observed " + std::to_string(state));
    spec.clamps[id] = state;
  }
  for (const auto& [slot, y] : obs.continuous) {
    if (std::find(spec.observed_slots.begin(), spec.observed_slots.end(), slot) == spec.observed_slots.end())
      throw Error(ErrorCode::UnknownVariable, "unknown observation slot '" + slot + "'");
    spec.slot_values[slot] = y;
  }
  return build_graph(std::move(spec));
}

/// Replaces several parameters of one family by a single shared declaration
/// (the prior of the first listed parameter is kept).
inline ModelGraph tie_parameters(const ModelGraph& graph, const std::vector<std::string>& ids, const std::string& shared_id) {
  if (ids.empty()) return graph;
  std::vector<std::size_t> idx;
  for (const auto& id : ids) {
    auto p = graph.parameter_index(id);
    if (!p) throw Error(ErrorCode::DanglingReference, "cannot tie unknown parameter '" + id + "'");
    if (graph.parameter(*p).family != graph.parameter(idx.empty() ? *p : idx.front()).family)
      throw Error(ErrorCode::FamilyMismatch, "tied parameters must share one family");
    idx.push_back(*p);
  }
  ModelSpec spec = graph.spec();
  ParameterDecl shared = graph.parameter(idx.front());
  shared.id = shared_id;
  std::vector<ParameterDecl> params;
  bool placed = false;
  for (std::size_t p = 0; p < spec.parameters.size(); ++p) {
    if (std::find(idx.begin(), idx.end(), p) == idx.end()) {
      params.push_back(spec.parameters[p]);
    } else if (!placed) {
      params.push_back(shared);
      placed = true;
    }
  }
  spec.parameters = std::move(params);
  for (auto& f : spec.factors)
    for (auto& term : f.kernel)
      std::visit(
          [&](auto& t) {
            if constexpr (requires { t.parameter; }) {
              if (std::find(ids.begin(), ids.end(), t.parameter) != ids.end()) t.parameter = shared_id;
            }
          },
          term);
  return build_graph(std::move(spec));
}

// ---------------------------------------------------------------------------
// Parameter assignments and kernel evaluation.

inline const ParamValue& value_of(const ParamAssignment& theta, const std::string& id) {
  auto it = theta.find(id);
  if (it == theta.end()) throw Error(ErrorCode::DanglingReference, "no value for parameter '" + id + "'");
  return it->second;
}

/// Checks that `theta` holds a well-formed value for every declared parameter.
inline void check_assignment(const ModelGraph& graph, const ParamAssignment& theta) {
  for (const auto& [id, value] : theta)
    if (!graph.parameter_index(id)) throw Error(ErrorCode::DanglingReference, "value given for undeclared parameter '" + id + "'");
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    const auto& value = value_of(theta, decl.id);
    const std::string where = "value of '" + decl.id + "'";
    if (decl.family.index() != value.index()) throw Error(ErrorCode::FamilyMismatch, where + " does not match its family");
    if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
      const auto& v = std::get<CategoricalValue>(value);
      if (v.rows != fam->rows || v.cols != fam->cols || v.table.size() != fam->rows * fam->cols)
        throw Error(ErrorCode::ArityMismatch, where + " has the wrong table shape");
      for (std::size_t r = 0; r < v.rows; ++r) {
        CompensatedSum s;
        for (std::size_t c = 0; c < v.cols; ++c) {
          const double x = v.at(r, c);
          if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidValue, where + " has a negative or non-finite entry");
          s += x;
        }
        if (std::abs(s.value() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidValue, where + ": row " + std::to_string(r) + " does not sum to 1");
      }
    } else if (auto* fam = std::get_if<GaussianMean>(&decl.family)) {
      const auto& v = std::get<GaussianValue>(value);
      if (v.means.size() != fam->components) throw Error(ErrorCode::ArityMismatch, where + " has the wrong component count");
      for (double m : v.means)
        if (!std::isfinite(m)) throw Error(ErrorCode::InvalidValue, where + " has a non-finite mean");
    } else {
      const auto& fam2 = std::get<Grid>(decl.family);
      if (std::get<GridValue>(value).index >= fam2.points.size()) throw Error(ErrorCode::InvalidValue, where + ": grid index out of range");
    }
  }
}

/// Documented default initial guess: uniform rows, zero means, lowest grid
/// index with finite prior mass.
inline ParamAssignment default_assignment(const ModelGraph& graph) {
  ParamAssignment theta;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    if (auto* c = std::get_if<CategoricalRows>(&decl.family)) {
      theta[decl.id] = CategoricalValue{c->rows, c->cols, std::vector<double>(c->rows * c->cols, 1.0 / static_cast<double>(c->cols))};
    } else if (auto* gm = std::get_if<GaussianMean>(&decl.family)) {
      theta[decl.id] = GaussianValue{std::vector<double>(gm->components, 0.0)};
    } else {
      std::size_t index = 0;
      if (auto* lp = std::get_if<GridLogPrior>(&decl.prior))
        while (index + 1 < lp->log_values.size() && lp->log_values[index] == kNegInf) ++index;
      theta[decl.id] = GridValue{index};
    }
  }
  return theta;
}

inline double gaussian_density(double y, double mean, double sigma) {
  const double d = (y - mean) / sigma;
  return std::exp(-0.5 * d * d) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Value of one kernel term at a local joint state and parameter value.
inline double term_value(const ModelGraph& graph, std::size_t node, const ResolvedTerm& term,
                         std::span<const std::size_t> digits, const ParamAssignment& theta) {
  const auto radices = graph.local_radices(node);
  const auto& decl_term = graph.node(node).kernel[term.term];
  switch (term.kind) {
    case ResolvedTerm::Kind::Tabular:
      return std::get<TabularTerm>(decl_term).values[joint_index(digits, radices)];
    case ResolvedTerm::Kind::Categorical: {
      const auto& v = std::get<CategoricalValue>(value_of(theta, graph.parameter(term.parameter).id));
      return v.at(flat_index(digits, term.row_positions, radices), flat_index(digits, term.col_positions, radices));
    }
    case ResolvedTerm::Kind::GaussianEmission: {
      const auto& decl = graph.parameter(term.parameter);
      const auto y = graph.slot_value(term.slot);
      if (!y) throw Error(ErrorCode::MissingObservation, "observation slot '" + term.slot + "' has no value");
      const auto& v = std::get<GaussianValue>(value_of(theta, decl.id));
      return gaussian_density(*y, v.means[digits[term.selector]], std::get<GaussianMean>(decl.family).sigma);
    }
    case ResolvedTerm::Kind::Grid: {
      const auto& decl = graph.parameter(term.parameter);
      const std::size_t npts = std::get<Grid>(decl.family).points.size();
      const std::size_t j = std::get<GridValue>(value_of(theta, decl.id)).index;
      return std::get<GridTerm>(decl_term).values[joint_index(digits, radices) * npts + j];
    }
  }
  return 0.0;
}

/// Full kernel g(z, theta) of a node at one local joint state.
inline double kernel_value(const ModelGraph& graph, std::size_t node, std::span<const std::size_t> digits,
                           const ParamAssignment& theta) {
  double v = 1.0;
  for (const auto& t : graph.terms(node)) v *= term_value(graph, node, t, digits, theta);
  return v;
}

/// Kernel of a node tabulated over all local joint states.
inline std::vector<double> kernel_table(const ModelGraph& graph, std::size_t node, const ParamAssignment& theta) {
  const auto radices = graph.local_radices(node);
  std::vector<double> table(product_of(radices));
  JointStateCounter z({radices.begin(), radices.end()});
  for (std::size_t i = 0; i < table.size(); ++i, z.next()) table[i] = kernel_value(graph, node, z.digits(), theta);
  return table;
}

/// log f_A(theta). Dirichlet priors are the unnormalized density
/// prod theta^(alpha-1); Gaussian priors are the normalized normal density.
inline double log_prior(const ParameterDecl& decl, const ParamValue& value) {
  return std::visit(
      [&](const auto& prior) -> double {
        using P = std::decay_t<decltype(prior)>;
        if constexpr (std::is_same_v<P, FlatPrior>) {
          return 0.0;
        } else if constexpr (std::is_same_v<P, DirichletRows>) {
          const auto& v = std::get<CategoricalValue>(value);
          double s = 0.0;
          for (std::size_t i = 0; i < v.table.size(); ++i) {
            const double a = prior.alpha[i] - 1.0;
            if (a == 0.0) continue;
            if (v.table[i] == 0.0) {
              s += a > 0.0 ? kNegInf : std::numeric_limits<double>::infinity();
            } else {
              s += a * std::log(v.table[i]);
            }
          }
          return s;
        } else if constexpr (std::is_same_v<P, GaussianPrior>) {
          const auto& v = std::get<GaussianValue>(value);
          double s = 0.0;
          for (std::size_t i = 0; i < v.means.size(); ++i) {
            const double d = v.means[i] - prior.m0[i];
            s += -0.5 * std::log(2.0 * std::numbers::pi * prior.v0[i]) - d * d / (2.0 * prior.v0[i]);
          }
          return s;
        } else {
          return prior.log_values[std::get<GridValue>(value).index];
        }
      },
      decl.prior);
}

inline double log_prior(const ModelGraph& graph, const ParamAssignment& theta) {
  double s = 0.0;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    s += log_prior(decl, value_of(theta, decl.id));
  }
  return s;
}

}  // namespace emmp
