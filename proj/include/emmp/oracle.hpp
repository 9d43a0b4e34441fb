#pragma once

// Brute-force reference implementations. Everything here enumerates the full
// hidden configuration space and never touches sum-product messages, so
// agreement with the message-passing engine is a meaningful check.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "emmp/em.hpp"
#include "emmp/error.hpp"
#include "emmp/graph.hpp"
#include "emmp/numeric.hpp"

namespace emmp::oracle {

inline constexpr std::size_t kMaxJointStates = std::size_t{1} << 24;

/// Number of joint states of the unclamped variables; TooLarge past the bound.
inline std::size_t hidden_state_count(const ModelGraph& graph) {
  std::size_t count = 1;
  for (std::size_t v = 0; v < graph.num_variables(); ++v) {
    if (graph.clamp_of(v)) continue;
    count *= graph.cardinality(v);
    if (count > kMaxJointStates)
      throw Error(ErrorCode::TooLarge, "hidden joint state space exceeds 2^24 configurations");
  }
  return count;
}

/// Calls f(x) for every full assignment x consistent with the clamps.
template <typename F>
void for_each_configuration(const ModelGraph& graph, F&& f) {
  hidden_state_count(graph);
  std::vector<std::size_t> free_vars;
  std::vector<std::size_t> x(graph.num_variables(), 0);
  for (std::size_t v = 0; v < graph.num_variables(); ++v) {
    if (auto c = graph.clamp_of(v)) {
      x[v] = *c;
    } else {
      free_vars.push_back(v);
    }
  }
  while (true) {
    f(static_cast<const std::vector<std::size_t>&>(x));
    std::size_t i = free_vars.size();
    while (i > 0) {
      const std::size_t v = free_vars[i - 1];
      if (++x[v] < graph.cardinality(v)) break;
      x[v] = 0;
      --i;
    }
    if (i == 0) return;
  }
}

inline void local_states(const ModelGraph& graph, std::size_t node, const std::vector<std::size_t>& x,
                         std::vector<std::size_t>& out) {
  const auto edges = graph.node_edges(node);
  out.resize(edges.size());
  for (std::size_t j = 0; j < edges.size(); ++j) out[j] = x[edges[j]];
}

/// log f_B(x, y, theta) as a direct product over nodes; -inf when any factor is zero.
inline double log_fb(const ModelGraph& graph, const std::vector<std::size_t>& x, const ParamAssignment& theta,
                     std::vector<std::size_t>& scratch) {
  double s = 0.0;
  for (std::size_t n = 0; n < graph.num_nodes(); ++n) {
    local_states(graph, n, x, scratch);
    const double k = kernel_value(graph, n, scratch, theta);
    if (k == 0.0) return kNegInf;
    s += std::log(k);
  }
  return s;
}

struct BruteMarginals {
  std::vector<std::vector<double>> edges;  // per variable
  std::vector<std::vector<double>> nodes;  // per node, over local joint states
  double log_evidence = 0.0;               // log p_B(y | theta)
};

inline BruteMarginals brute_marginals(const ModelGraph& graph, const ParamAssignment& theta) {
  std::vector<double> logs;
  logs.reserve(hidden_state_count(graph));
  std::vector<std::size_t> scratch;
  double max_log = kNegInf;
  for_each_configuration(graph, [&](const auto& x) {
    logs.push_back(log_fb(graph, x, theta, scratch));
    max_log = std::max(max_log, logs.back());
  });
  if (max_log == kNegInf) throw Error(ErrorCode::DegenerateEvidence, "every configuration has zero weight");

  std::vector<std::vector<CompensatedSum>> edge_acc(graph.num_variables()), node_acc(graph.num_nodes());
  for (std::size_t v = 0; v < graph.num_variables(); ++v) edge_acc[v].resize(graph.cardinality(v));
  for (std::size_t n = 0; n < graph.num_nodes(); ++n) node_acc[n].resize(product_of(graph.local_radices(n)));
  CompensatedSum total;
  std::size_t k = 0;
  for_each_configuration(graph, [&](const auto& x) {
    const double w = std::exp(logs[k++] - max_log);
    if (w == 0.0) return;
    total += w;
    for (std::size_t v = 0; v < graph.num_variables(); ++v) edge_acc[v][x[v]] += w;
    for (std::size_t n = 0; n < graph.num_nodes(); ++n) {
      local_states(graph, n, x, scratch);
      node_acc[n][joint_index(scratch, graph.local_radices(n))] += w;
    }
  });

  BruteMarginals out;
  const double z = total.value();
  auto finish = [z](const std::vector<CompensatedSum>& acc) {
    std::vector<double> p(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) p[i] = acc[i].value() / z;
    return p;
  };
  for (const auto& a : edge_acc) out.edges.push_back(finish(a));
  for (const auto& a : node_acc) out.nodes.push_back(finish(a));
  out.log_evidence = max_log + std::log(z);
  return out;
}

/// log f(theta) = log sum_x f_A(theta) f_B(x, theta) by enumeration.
inline double brute_log_f(const ModelGraph& graph, const ParamAssignment& theta) {
  const double lp = log_prior(graph, theta);
  if (lp == kNegInf) return kNegInf;
  std::vector<double> logs;
  std::vector<std::size_t> scratch;
  for_each_configuration(graph, [&](const auto& x) { logs.push_back(log_fb(graph, x, theta, scratch)); });
  return lp + log_sum_exp(logs);
}

/// f(theta) itself (not its log).
inline double brute_f(const ModelGraph& graph, const ParamAssignment& theta) { return std::exp(brute_log_f(graph, theta)); }

/// Q at each point is exp(log_scale) * values[i]; the common scale keeps
/// values representable when f itself under- or overflows.
struct QTable {
  std::vector<ParamAssignment> points;
  std::vector<double> values;  // -inf allowed
  double log_scale = 0.0;
  double q(std::size_t i) const { return values[i] == kNegInf ? kNegInf : std::exp(log_scale) * values[i]; }
};

namespace detail {

/// Accumulates sum_x weight(x) * score_c(x) for many candidates c in one
/// enumeration pass. `weight_log(x)` gives log weight (may be -inf, skipped);
/// a candidate whose score is -inf at a weighted x is -inf overall.
template <typename WeightLog, typename Score>
std::vector<double> weighted_sums(const ModelGraph& graph, std::size_t candidates, WeightLog&& weight_log, Score&& score,
                                  double& log_scale_out) {
  std::vector<double> wlogs;
  double max_log = kNegInf;
  for_each_configuration(graph, [&](const auto& x) {
    wlogs.push_back(weight_log(x));
    max_log = std::max(max_log, wlogs.back());
  });
  log_scale_out = max_log;
  std::vector<CompensatedSum> acc(candidates);
  std::vector<bool> neg_inf(candidates, false);
  if (max_log == kNegInf) return std::vector<double>(candidates, 0.0);
  std::size_t k = 0;
  for_each_configuration(graph, [&](const auto& x) {
    const double w = std::exp(wlogs[k++] - max_log);
    if (w == 0.0) return;
    for (std::size_t c = 0; c < candidates; ++c) {
      if (neg_inf[c]) continue;
      const double s = score(x, c);
      if (s == kNegInf) {
        neg_inf[c] = true;
      } else {
        acc[c] += w * s;
      }
    }
  });
  std::vector<double> out(candidates);
  for (std::size_t c = 0; c < candidates; ++c) out[c] = neg_inf[c] ? kNegInf : acc[c].value();
  return out;
}

}  // namespace detail

/// Q(theta) = sum_x f(x, theta_hat) log f(x, theta) at each candidate theta
/// (prior included, 0 log 0 = 0).
inline QTable enumerate_q(const ModelGraph& graph, const ParamAssignment& theta_hat, std::vector<ParamAssignment> candidates) {
  const double lp_hat = log_prior(graph, theta_hat);
  if (lp_hat == kNegInf) throw Error(ErrorCode::PriorZero, "theta-hat lies outside the prior support");
  std::vector<double> lp(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) lp[c] = log_prior(graph, candidates[c]);
  std::vector<std::size_t> scratch;
  double scale = 0.0;
  auto sums = detail::weighted_sums(
      graph, candidates.size(), [&](const auto& x) { return lp_hat + log_fb(graph, x, theta_hat, scratch); },
      [&](const auto& x, std::size_t c) {
        if (lp[c] == kNegInf) return kNegInf;
        const double l = log_fb(graph, x, candidates[c], scratch);
        return l == kNegInf ? kNegInf : lp[c] + l;
      },
      scale);
  QTable q;
  q.values = std::move(sums);
  q.log_scale = scale;
  q.points = std::move(candidates);
  return q;
}

/// Global h(theta) = E_{p_B(x | y, theta_hat)}[log f_B(x, y, theta)] at each candidate.
inline std::vector<double> enumerate_h(const ModelGraph& graph, const ParamAssignment& theta_hat,
                                       const std::vector<ParamAssignment>& candidates) {
  std::vector<std::size_t> scratch;
  double scale = 0.0;
  std::vector<double> wl;
  for_each_configuration(graph, [&](const auto& x) { wl.push_back(log_fb(graph, x, theta_hat, scratch)); });
  const double log_z = log_sum_exp(wl);
  if (log_z == kNegInf) throw Error(ErrorCode::DegenerateEvidence, "every configuration has zero weight");
  auto sums = detail::weighted_sums(
      graph, candidates.size(), [&](const auto& x) { return log_fb(graph, x, theta_hat, scratch) - log_z; },
      [&](const auto& x, std::size_t c) { return log_fb(graph, x, candidates[c], scratch); }, scale);
  for (double& s : sums)
    if (s != kNegInf) s *= std::exp(scale);
  return sums;
}

/// Auxiliary function f~(theta, theta') = f(theta') + sum_x f(x, theta') log(f(x, theta) / f(x, theta')).
inline double aux_function(const ModelGraph& graph, const ParamAssignment& theta, const ParamAssignment& theta_prime) {
  const double lp = log_prior(graph, theta);
  const double lp_prime = log_prior(graph, theta_prime);
  std::vector<std::size_t> scratch;
  CompensatedSum f_prime, cross;
  bool neg_inf = false;
  for_each_configuration(graph, [&](const auto& x) {
    const double lq = lp_prime == kNegInf ? kNegInf : lp_prime + log_fb(graph, x, theta_prime, scratch);
    if (lq == kNegInf) return;
    const double w = std::exp(lq);
    f_prime += w;
    const double l = lp == kNegInf ? kNegInf : lp + log_fb(graph, x, theta, scratch);
    if (l == kNegInf) {
      neg_inf = true;
      return;
    }
    cross += w * (l - lq);
  });
  if (neg_inf) return kNegInf;
  return f_prime.value() + cross.value();
}

// ---------------------------------------------------------------------------
// Global EM steps.

/// Evaluation lattice for the pure-enumeration M-step.
struct ThetaGrid {
  std::size_t resolution = 101;  // points per dimension (simplex denominators are resolution - 1)
  std::map<std::string, std::pair<double, double>> gaussian_bounds;
};

/// One lattice block: the parameter values obtained by varying a single
/// categorical row, a single Gaussian component, or a whole grid parameter.
struct LatticeBlock {
  std::string parameter;
  std::size_t coordinate = 0;  // row or component; unused for grids
  std::vector<ParamValue> candidates;
};

/// Lattice step in parameter units for one parameter.
inline double lattice_cell(const ParameterDecl& decl, const ThetaGrid& grid) {
  if (std::holds_alternative<CategoricalRows>(decl.family)) return 1.0 / static_cast<double>(grid.resolution - 1);
  if (std::holds_alternative<GaussianMean>(decl.family)) {
    const auto it = grid.gaussian_bounds.find(decl.id);
    if (it == grid.gaussian_bounds.end()) throw Error(ErrorCode::InvalidValue, "no lattice bounds for '" + decl.id + "'");
    return (it->second.second - it->second.first) / static_cast<double>(grid.resolution - 1);
  }
  return 1.0;
}

/// Bounds spanning every observed value and prior mean, padded by one unit.
inline ThetaGrid default_theta_grid(const ModelGraph& graph, std::size_t resolution) {
  ThetaGrid grid;
  grid.resolution = resolution;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    if (!std::holds_alternative<GaussianMean>(decl.family)) continue;
    double lo = 0.0, hi = 0.0;
    bool any = false;
    auto take = [&](double v) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    };
    for (const auto& [slot, y] : graph.spec().slot_values) take(y);
    if (auto* gp = std::get_if<GaussianPrior>(&decl.prior))
      for (double m : gp->m0) take(m);
    grid.gaussian_bounds[decl.id] = {lo - 1.0, hi + 1.0};
  }
  return grid;
}

namespace detail {

inline void simplex_points(std::size_t parts, std::size_t total, std::vector<std::size_t>& prefix,
                           std::vector<std::vector<std::size_t>>& out) {
  if (prefix.size() + 1 == parts) {
    std::size_t used = 0;
    for (std::size_t k : prefix) used += k;
    prefix.push_back(total - used);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  std::size_t used = 0;
  for (std::size_t k : prefix) used += k;
  for (std::size_t k = 0; k + used <= total; ++k) {
    prefix.push_back(k);
    simplex_points(parts, total, prefix, out);
    prefix.pop_back();
  }
}

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

inline std::vector<LatticeBlock> lattice_blocks(const ModelGraph& graph, const ParamAssignment& theta, const ThetaGrid& grid) {
  if (grid.resolution < 2) throw Error(ErrorCode::InvalidValue, "lattice resolution must be >= 2");
  std::vector<LatticeBlock> blocks;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    const ParamValue& current = value_of(theta, decl.id);
    if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
      const std::size_t denom = grid.resolution - 1;
      if (detail::binomial(denom + fam->cols - 1, fam->cols - 1) > 5e6)
        throw Error(ErrorCode::TooLarge, "simplex lattice for '" + decl.id + "' is too large at this resolution");
      std::vector<std::vector<std::size_t>> pts;
      std::vector<std::size_t> prefix;
      detail::simplex_points(fam->cols, denom, prefix, pts);
      for (std::size_t r = 0; r < fam->rows; ++r) {
        LatticeBlock b{decl.id, r, {}};
        for (const auto& k : pts) {
          auto v = std::get<CategoricalValue>(current);
          for (std::size_t c = 0; c < fam->cols; ++c) v.table[r * fam->cols + c] = static_cast<double>(k[c]) / static_cast<double>(denom);
          b.candidates.emplace_back(std::move(v));
        }
        blocks.push_back(std::move(b));
      }
    } else if (auto* fam = std::get_if<GaussianMean>(&decl.family)) {
      const auto it = grid.gaussian_bounds.find(decl.id);
      if (it == grid.gaussian_bounds.end()) throw Error(ErrorCode::InvalidValue, "no lattice bounds for '" + decl.id + "'");
      const auto [lo, hi] = it->second;
      if (!(hi > lo)) throw Error(ErrorCode::InvalidValue, "empty lattice bounds for '" + decl.id + "'");
      for (std::size_t i = 0; i < fam->components; ++i) {
        LatticeBlock b{decl.id, i, {}};
        for (std::size_t k = 0; k < grid.resolution; ++k) {
          auto v = std::get<GaussianValue>(current);
          v.means[i] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid.resolution - 1);
          b.candidates.emplace_back(std::move(v));
        }
        blocks.push_back(std::move(b));
      }
    } else {
      LatticeBlock b{decl.id, 0, {}};
      for (std::size_t j = 0; j < std::get<Grid>(decl.family).points.size(); ++j) b.candidates.emplace_back(GridValue{j});
      blocks.push_back(std::move(b));
    }
  }
  return blocks;
}

namespace detail {

/// Lattice argmax of Q over one block, the other blocks held at theta_hat.
/// Q separates over blocks (each kernel term reads one row, component or grid
/// parameter per configuration; priors are per parameter), so block-wise
/// search finds the joint lattice argmax.
inline ParamValue block_argmax(const ModelGraph& graph, const ParamAssignment& theta_hat, const LatticeBlock& block) {
  std::vector<ParamAssignment> cands;
  cands.reserve(block.candidates.size());
  for (const auto& v : block.candidates) {
    ParamAssignment t = theta_hat;
    t[block.parameter] = v;
    cands.push_back(std::move(t));
  }
  const QTable q = enumerate_q(graph, theta_hat, std::move(cands));
  std::size_t best = kNone;
  double best_value = kNegInf;
  for (std::size_t c = 0; c < q.values.size(); ++c) {
    if (q.values[c] > best_value) {
      best_value = q.values[c];
      best = c;
    }
  }
  if (best == kNone) throw Error(ErrorCode::AllNegInf, "every lattice point of '" + block.parameter + "' has -inf Q");
  return block.candidates[best];
}

inline void merge_block(ParamValue& target, const ParamValue& source, const LatticeBlock& block, const ModelGraph& graph) {
  const auto& decl = graph.parameter(*graph.parameter_index(block.parameter));
  if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
    auto& t = std::get<CategoricalValue>(target);
    const auto& s = std::get<CategoricalValue>(source);
    for (std::size_t c = 0; c < fam->cols; ++c) t.table[block.coordinate * fam->cols + c] = s.table[block.coordinate * fam->cols + c];
  } else if (std::holds_alternative<GaussianMean>(decl.family)) {
    std::get<GaussianValue>(target).means[block.coordinate] = std::get<GaussianValue>(source).means[block.coordinate];
  } else {
    target = source;
  }
}

}  // namespace detail

/// Pure lattice global EM step: argmax of the enumerated Q over the lattice,
/// ties to the lowest lattice index.
inline ParamAssignment global_em_step_lattice(const ModelGraph& graph, const ParamAssignment& theta_hat, const ThetaGrid& grid) {
  hidden_state_count(graph);
  ParamAssignment next = theta_hat;
  for (const auto& block : lattice_blocks(graph, theta_hat, grid)) {
    const ParamValue best = detail::block_argmax(graph, theta_hat, block);
    detail::merge_block(next[block.parameter], best, block, graph);
  }
  return next;
}

/// Global EM step with the expectation taken over the full enumerated
/// posterior p_B(x | y, theta_hat). Categorical and Gaussian parameters use
/// the textbook stationary points of the enumerated Q, written out here
/// without reference to the message-passing statistics; grid parameters use
/// the argmax of the enumerated Q over their grid.
inline ParamAssignment global_em_step(const ModelGraph& graph, const ParamAssignment& theta_hat) {
  if (log_prior(graph, theta_hat) == kNegInf) throw Error(ErrorCode::PriorZero, "theta-hat lies outside the prior support");
  std::vector<double> logs;
  std::vector<std::size_t> scratch;
  for_each_configuration(graph, [&](const auto& x) { logs.push_back(log_fb(graph, x, theta_hat, scratch)); });
  const double log_z = log_sum_exp(logs);
  if (log_z == kNegInf) throw Error(ErrorCode::DegenerateEvidence, "every configuration has zero weight");

  // Expected counts (categorical) or expected weights and weighted sums (Gaussian), per parameter.
  std::vector<std::vector<CompensatedSum>> first(graph.num_parameters()), second(graph.num_parameters());
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& fam = graph.parameter(p).family;
    if (auto* c = std::get_if<CategoricalRows>(&fam)) first[p].resize(c->rows * c->cols);
    if (auto* g = std::get_if<GaussianMean>(&fam)) {
      first[p].resize(g->components);
      second[p].resize(g->components);
    }
  }
  std::size_t k = 0;
  for_each_configuration(graph, [&](const auto& x) {
    const double w = std::exp(logs[k++] - log_z);
    if (w == 0.0) return;
    for (std::size_t n = 0; n < graph.num_nodes(); ++n) {
      local_states(graph, n, x, scratch);
      const auto radices = graph.local_radices(n);
      for (const auto& term : graph.terms(n)) {
        if (term.kind == ResolvedTerm::Kind::Categorical) {
          const std::size_t cols = std::get<CategoricalRows>(graph.parameter(term.parameter).family).cols;
          first[term.parameter][flat_index(scratch, term.row_positions, radices) * cols +
                                flat_index(scratch, term.col_positions, radices)] += w;
        } else if (term.kind == ResolvedTerm::Kind::GaussianEmission) {
          first[term.parameter][scratch[term.selector]] += w;
          second[term.parameter][scratch[term.selector]] += w * *graph.slot_value(term.slot);
        }
      }
    }
  });

  ParamAssignment next = theta_hat;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    const std::string where = "parameter '" + decl.id + "'";
    if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
      // Maximize sum_c (n_c + alpha_c - 1) log theta_c on the simplex.
      const auto* dir = std::get_if<DirichletRows>(&decl.prior);
      CategoricalValue v{fam->rows, fam->cols, std::vector<double>(fam->rows * fam->cols)};
      for (std::size_t r = 0; r < fam->rows; ++r) {
        double row_total = 0.0;
        for (std::size_t c = 0; c < fam->cols; ++c) {
          const std::size_t i = r * fam->cols + c;
          const double e = first[p][i].value() + (dir ? dir->alpha[i] - 1.0 : 0.0);
          v.table[i] = e > 0.0 ? e : 0.0;
          row_total += v.table[i];
        }
        if (!(row_total > 0.0)) throw Error(ErrorCode::ZeroRow, where + ": row " + std::to_string(r) + " has no mass");
        for (std::size_t c = 0; c < fam->cols; ++c) v.table[r * fam->cols + c] /= row_total;
      }
      next[decl.id] = std::move(v);
    } else if (auto* fam = std::get_if<GaussianMean>(&decl.family)) {
      // Zero of d/dmu [sum w (y - mu)^2 / (2 sigma^2) + prior], i.e. a precision-weighted average.
      const auto* gp = std::get_if<GaussianPrior>(&decl.prior);
      GaussianValue v{std::vector<double>(fam->components)};
      for (std::size_t i = 0; i < fam->components; ++i) {
        const double precision_data = first[p][i].value() / (fam->sigma * fam->sigma);
        const double mean_data = first[p][i].value() > 0.0 ? second[p][i].value() / first[p][i].value() : 0.0;
        if (gp) {
          const double precision_prior = 1.0 / gp->v0[i];
          v.means[i] = (precision_data * mean_data + precision_prior * gp->m0[i]) / (precision_data + precision_prior);
        } else {
          if (!(first[p][i].value() > 0.0)) throw Error(ErrorCode::ZeroWeight, where + ": component " + std::to_string(i) + " has no weight");
          v.means[i] = mean_data;
        }
      }
      next[decl.id] = std::move(v);
    } else {
      LatticeBlock block{decl.id, 0, {}};
      for (std::size_t j = 0; j < std::get<Grid>(decl.family).points.size(); ++j) block.candidates.emplace_back(GridValue{j});
      next[decl.id] = detail::block_argmax(graph, theta_hat, block);
    }
  }
  return next;
}

/// Lattice form of the global step, as an overload.
inline ParamAssignment global_em_step(const ModelGraph& graph, const ParamAssignment& theta_hat, const ThetaGrid& grid) {
  return global_em_step_lattice(graph, theta_hat, grid);
}

}  // namespace emmp::oracle
