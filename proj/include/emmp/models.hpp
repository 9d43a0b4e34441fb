#pragma once

// Ready-made models: the one-node model, hidden Markov chains with discrete or
// Gaussian emissions, and stacking of i.i.d. datasets onto one parameter set.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emmp/error.hpp"
#include "emmp/graph.hpp"

namespace emmp {

/// One parameterized node on one hidden half-edge: g(x, theta) = theta_x * w_x.
/// `weights` is an optional fixed likelihood over the states (empty means all
/// ones over two states). With `observed` set, x is clamped.
inline ModelSpec trivial_spec(const std::vector<double>& weights = {}, PriorSpec prior = FlatPrior{},
                              std::optional<std::size_t> observed = std::nullopt) {
  const std::size_t states = weights.empty() ? 2 : weights.size();
  ModelSpec spec;
  spec.variables = {{"X", states}};
  spec.parameters = {{"theta", CategoricalRows{1, states}, std::move(prior)}};
  FactorDecl f{"g", {"X"}, {CategoricalTerm{"theta", {}, {"X"}}}};
  if (!weights.empty()) f.kernel.push_back(TabularTerm{weights});
  spec.factors = {std::move(f)};
  spec.observed_variables = {"X"};
  if (observed) spec.clamps["X"] = *observed;
  return spec;
}

inline ModelGraph build_trivial(const std::vector<double>& weights = {}, PriorSpec prior = FlatPrior{},
                                std::optional<std::size_t> observed = std::nullopt) {
  return build_graph(trivial_spec(weights, std::move(prior), observed));
}

enum class Tying { Shared, PerStep };

struct HmmSpec {
  std::size_t n = 1;
  std::size_t states = 2;
  std::size_t alphabet = 2;  // discrete emissions only
  bool gaussian = false;     // Gaussian emissions with known sigma

  bool transition_is_parameter = true;
  bool emission_is_parameter = false;
  Tying tying = Tying::Shared;
  bool split = false;  // separate transition and emission nodes joined by equality nodes

  std::vector<double> initial;     // pi, default uniform
  std::vector<double> transition;  // fixed A (states x states) when not a parameter, default uniform
  std::vector<double> emission;    // fixed B (states x alphabet) when not a parameter, default uniform

  PriorSpec transition_prior = FlatPrior{};
  PriorSpec emission_prior = FlatPrior{};
  double sigma = 1.0;
};

namespace detail {

inline std::string indexed(const std::string& base, std::size_t k) { return base + std::to_string(k); }

inline std::vector<double> or_uniform(const std::vector<double>& v, std::size_t rows, std::size_t cols, const std::string& what) {
  if (v.empty()) return std::vector<double>(rows * cols, 1.0 / static_cast<double>(cols));
  if (v.size() != rows * cols)
    throw Error(ErrorCode::ArityMismatch, what + " needs " + std::to_string(rows * cols) + " entries, got " + std::to_string(v.size()));
  return v;
}

/// HMM spec with the observation schema but no bound observations.
inline ModelSpec hmm_skeleton(const HmmSpec& h) {
  if (h.n == 0 || h.states == 0 || (!h.gaussian && h.alphabet == 0))
    throw Error(ErrorCode::InvalidValue, "hmm needs n >= 1 and at least one state and symbol");
  if (h.gaussian && !(h.sigma > 0.0)) throw Error(ErrorCode::InvalidValue, "hmm sigma must be positive");
  const std::size_t S = h.states;
  const std::size_t M = h.alphabet;
  const auto pi = or_uniform(h.initial, 1, S, "initial distribution");
  const auto A = h.transition_is_parameter ? std::vector<double>{} : or_uniform(h.transition, S, S, "transition table");
  if (h.gaussian && !h.emission_is_parameter)
    throw Error(ErrorCode::InvalidValue, "Gaussian emissions need their means declared as a parameter");
  const auto B = h.emission_is_parameter ? std::vector<double>{} : or_uniform(h.emission, S, M, "emission table");

  ModelSpec spec;
  auto param_name = [&](const std::string& base, std::size_t k) { return h.tying == Tying::Shared ? base : indexed(base, k); };
  const std::string emission_base = h.gaussian ? "mu" : "B";
  auto emission_family = [&]() -> Family {
    if (h.gaussian) return GaussianMean{S, h.sigma};
    return CategoricalRows{S, M};
  };
  for (std::size_t k = 1; k <= h.n; ++k) {
    if (h.transition_is_parameter && (h.tying == Tying::PerStep || k == 1))
      spec.parameters.push_back({param_name("A", k), CategoricalRows{S, S}, h.transition_prior});
  }
  for (std::size_t k = 1; k <= h.n; ++k) {
    if (h.emission_is_parameter && (h.tying == Tying::PerStep || k == 1))
      spec.parameters.push_back({param_name(emission_base, k), emission_family(), h.emission_prior});
  }

  spec.variables.push_back({"X0", S});
  spec.factors.push_back({"f0", {"X0"}, {TabularTerm{pi}}});

  for (std::size_t k = 1; k <= h.n; ++k) {
    const std::string prev = indexed("X", k - 1);
    const std::string cur = indexed("X", k);
    const std::string y = indexed("Y", k);
    const std::string slot = indexed("y", k);
    spec.variables.push_back({cur, S});
    if (!h.gaussian) {
      spec.variables.push_back({y, M});
      spec.observed_variables.push_back(y);
    } else {
      spec.observed_slots.push_back(slot);
    }

    // Transition term over (from, to) and emission term over (state[, symbol]).
    auto transition_term = [&](const std::string& from, const std::string& to, std::size_t trailing) -> KernelTerm {
      if (h.transition_is_parameter) return CategoricalTerm{param_name("A", k), {from}, {to}};
      std::vector<double> t;
      for (double a : A) t.insert(t.end(), trailing, a);
      return TabularTerm{std::move(t)};
    };
    auto emission_term = [&](const std::string& state, std::size_t leading) -> KernelTerm {
      if (h.emission_is_parameter) {
        if (h.gaussian) return GaussianEmissionTerm{param_name("mu", k), state, slot};
        return CategoricalTerm{param_name("B", k), {state}, {y}};
      }
      // Fixed emission: B repeated once per state of the leading edge.
      std::vector<double> local;
      for (std::size_t l = 0; l < leading; ++l)
        for (double b : B) local.push_back(b);
      return TabularTerm{std::move(local)};
    };

    if (!h.split) {
      FactorDecl f{indexed("f", k), {prev, cur}, {}};
      if (!h.gaussian) f.edges.push_back(y);
      f.kernel.push_back(transition_term(prev, cur, h.gaussian ? 1 : M));
      f.kernel.push_back(emission_term(cur, S));
      spec.factors.push_back(std::move(f));
    } else {
      const std::string t_out = indexed("Xt", k);
      const std::string e_in = indexed("Xe", k);
      spec.variables.push_back({t_out, S});
      spec.variables.push_back({e_in, S});
      spec.factors.push_back({indexed("t", k), {prev, t_out}, {transition_term(prev, t_out, 1)}});
      std::vector<double> eq(S * S * S, 0.0);
      for (std::size_t s = 0; s < S; ++s) eq[(s * S + s) * S + s] = 1.0;
      spec.factors.push_back({indexed("eq", k), {t_out, e_in, cur}, {TabularTerm{std::move(eq)}}});
      FactorDecl e{indexed("e", k), {e_in}, {}};
      if (!h.gaussian) e.edges.push_back(y);
      e.kernel.push_back(emission_term(e_in, 1));
      spec.factors.push_back(std::move(e));
    }
  }
  return spec;
}

}  // namespace detail

/// Chain f_0(x_0) f_1(x_0, x_1, y_1, theta_1) ... f_n(x_{n-1}, x_n, y_n, theta_n)
/// with discrete emissions; Y_k are clamped to `observations`.
inline ModelSpec hmm_spec(const HmmSpec& h, const std::vector<std::size_t>& observations) {
  if (h.gaussian) throw Error(ErrorCode::FamilyMismatch, "hmm_spec takes discrete observations; use the Gaussian builder");
  if (observations.size() != h.n)
    throw Error(ErrorCode::LengthMismatch, "chain length " + std::to_string(h.n) + " but " + std::to_string(observations.size()) + " observations");
  ModelSpec spec = detail::hmm_skeleton(h);
  for (std::size_t k = 1; k <= h.n; ++k) spec.clamps[detail::indexed("Y", k)] = observations[k - 1];
  return spec;
}

inline ModelGraph build_hmm(const HmmSpec& h, const std::vector<std::size_t>& observations) {
  return build_graph(hmm_spec(h, observations));
}

/// HMM whose emissions are Gaussian with parameterized means ("mu").
inline ModelSpec gaussian_chain_spec(HmmSpec h, const std::vector<double>& observations) {
  h.gaussian = true;
  h.emission_is_parameter = true;
  if (observations.size() != h.n)
    throw Error(ErrorCode::LengthMismatch, "chain length " + std::to_string(h.n) + " but " + std::to_string(observations.size()) + " observations");
  ModelSpec spec = detail::hmm_skeleton(h);
  for (std::size_t k = 1; k <= h.n; ++k) spec.slot_values[detail::indexed("y", k)] = observations[k - 1];
  return spec;
}

inline ModelGraph build_gaussian_mixture_chain(const HmmSpec& h, const std::vector<double>& observations) {
  return build_graph(gaussian_chain_spec(h, observations));
}

/// Replicates the variables, nodes and observation slots of `base` once per
/// dataset (suffix "@r") while sharing every parameter, so the datasets are
/// treated as independent draws. Observations already bound in `base` carry
/// into every copy and a dataset's entries override them. A single dataset
/// binds onto `base` without renaming; no datasets returns `base` unchanged.
inline ModelSpec stack_datasets(const ModelSpec& base, const std::vector<Observations>& rows) {
  if (rows.size() <= 1) {
    ModelSpec spec = base;
    if (!rows.empty()) {
      for (const auto& [id, s] : rows[0].discrete) spec.clamps[id] = s;
      for (const auto& [id, y] : rows[0].continuous) spec.slot_values[id] = y;
    }
    return spec;
  }
  ModelSpec spec;
  spec.parameters = base.parameters;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string suffix = "@" + std::to_string(r);
    auto s = [&](const std::string& id) { return id + suffix; };
    for (const auto& v : base.variables) spec.variables.push_back({s(v.id), v.cardinality});
    for (const auto& f : base.factors) {
      FactorDecl g{s(f.id), {}, f.kernel};
      for (const auto& e : f.edges) g.edges.push_back(s(e));
      for (auto& term : g.kernel) {
        if (auto* c = std::get_if<CategoricalTerm>(&term)) {
          for (auto& e : c->row_edges) e = s(e);
          for (auto& e : c->col_edges) e = s(e);
        } else if (auto* gt = std::get_if<GaussianEmissionTerm>(&term)) {
          gt->selector = s(gt->selector);
          gt->observation = s(gt->observation);
        }
      }
      spec.factors.push_back(std::move(g));
    }
    for (const auto& v : base.observed_variables) spec.observed_variables.push_back(s(v));
    for (const auto& o : base.observed_slots) spec.observed_slots.push_back(s(o));
    for (const auto& [id, st] : base.clamps) spec.clamps[s(id)] = st;
    for (const auto& [id, y] : base.slot_values) spec.slot_values[s(id)] = y;
    for (const auto& [id, st] : rows[r].discrete) spec.clamps[s(id)] = st;
    for (const auto& [id, y] : rows[r].continuous) spec.slot_values[s(id)] = y;
  }
  return spec;
}

}  // namespace emmp
