#pragma once

// EM as message passing.
//
// Upward: every parameterized node sends an h-message, the expectation of
// log g(z, theta) under the node's joint posterior at the current estimate.
// h-messages are kept as sufficient statistics (additive constants dropped),
// so the sum over nodes sharing a parameter is plain statistic addition.
//
// Downward: the new estimate maximizes log-prior + summed h-messages, which
// for every supported family has a closed form or an exact grid argmax.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "emmp/error.hpp"
#include "emmp/graph.hpp"
#include "emmp/numeric.hpp"
#include "emmp/sum_product.hpp"

namespace emmp {

struct CategoricalCounts {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> counts;  // expected count per table entry, row-major
  bool operator==(const CategoricalCounts&) const = default;
};
struct GaussianMoments {
  std::vector<double> weight;        // E[indicator of component i]
  std::vector<double> weighted_sum;  // E[indicator * y]
  bool operator==(const GaussianMoments&) const = default;
};
struct GridLogTable {
  std::vector<double> values;  // E[log g(Z, theta_j)] per grid point, -inf allowed
  bool operator==(const GridLogTable&) const = default;
};
using HPayload = std::variant<CategoricalCounts, GaussianMoments, GridLogTable>;

struct HStatistic {
  std::string parameter;
  HPayload payload;
  std::size_t contributors = 1;  // number of node terms summed into this statistic
  bool operator==(const HStatistic&) const = default;
};

using HStatisticMap = std::map<std::string, HStatistic>;

/// h-messages out of one node, one per parameterized kernel term, computed
/// from the sum-product messages toward the node.
inline std::vector<HStatistic> h_message(const ModelGraph& graph, std::size_t node, std::span<const Message* const> incoming,
                                         const ParamAssignment& theta) {
  if (!graph.is_parameterized(node))
    throw Error(ErrorCode::UnparameterizedNode, "factor '" + graph.node(node).id + "' has no parameter; its h-term is a droppable constant");
  const Posterior post = node_posterior(graph, node, incoming, theta);
  const auto radices = graph.local_radices(node);

  std::vector<HStatistic> out;
  for (const auto& term : graph.terms(node)) {
    if (term.kind == ResolvedTerm::Kind::Tabular) continue;
    const auto& decl = graph.parameter(term.parameter);
    HStatistic stat;
    stat.parameter = decl.id;
    JointStateCounter z({radices.begin(), radices.end()});
    const auto& d = z.digits();

    switch (term.kind) {
      case ResolvedTerm::Kind::Categorical: {
        const auto& fam = std::get<CategoricalRows>(decl.family);
        CategoricalCounts c{fam.rows, fam.cols, std::vector<double>(fam.rows * fam.cols, 0.0)};
        for (std::size_t i = 0; i < post.table.size(); ++i, z.next()) {
          const std::size_t r = flat_index(d, term.row_positions, radices);
          const std::size_t col = flat_index(d, term.col_positions, radices);
          c.counts[r * fam.cols + col] += post.table[i];
        }
        stat.payload = std::move(c);
        break;
      }
      case ResolvedTerm::Kind::GaussianEmission: {
        const auto& fam = std::get<GaussianMean>(decl.family);
        const auto y = graph.slot_value(term.slot);
        if (!y) throw Error(ErrorCode::MissingObservation, "observation slot '" + term.slot + "' has no value");
        GaussianMoments m{std::vector<double>(fam.components, 0.0), std::vector<double>(fam.components, 0.0)};
        for (std::size_t i = 0; i < post.table.size(); ++i, z.next()) m.weight[d[term.selector]] += post.table[i];
        for (std::size_t k = 0; k < fam.components; ++k) m.weighted_sum[k] = m.weight[k] * *y;
        stat.payload = std::move(m);
        break;
      }
      case ResolvedTerm::Kind::Grid: {
        const std::size_t npts = std::get<Grid>(decl.family).points.size();
        const auto& values = std::get<GridTerm>(graph.node(node).kernel[term.term]).values;
        std::vector<CompensatedSum> acc(npts);
        std::vector<bool> neg_inf(npts, false);
        for (std::size_t i = 0; i < post.table.size(); ++i) {
          for (std::size_t j = 0; j < npts; ++j) {
            const double t = xlogy(post.table[i], values[i * npts + j]);
            if (t == kNegInf) {
              neg_inf[j] = true;
            } else {
              acc[j] += t;
            }
          }
        }
        GridLogTable table{std::vector<double>(npts)};
        for (std::size_t j = 0; j < npts; ++j) table.values[j] = neg_inf[j] ? kNegInf : acc[j].value();
        stat.payload = std::move(table);
        break;
      }
      case ResolvedTerm::Kind::Tabular:
        break;
    }
    out.push_back(std::move(stat));
  }
  return out;
}

/// Sums statistics that share a parameter id.
inline HStatisticMap combine_h(std::span<const HStatistic> stats) {
  HStatisticMap out;
  for (const auto& s : stats) {
    auto [it, fresh] = out.emplace(s.parameter, s);
    if (fresh) continue;
    HStatistic& acc = it->second;
    if (acc.payload.index() != s.payload.index())
      throw Error(ErrorCode::FamilyMismatch, "h-statistics for '" + s.parameter + "' come from different families");
    auto add = [&](std::vector<double>& a, const std::vector<double>& b) {
      if (a.size() != b.size()) throw Error(ErrorCode::ArityMismatch, "h-statistics for '" + s.parameter + "' differ in shape");
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    std::visit(
        [&](auto& a) {
          using P = std::decay_t<decltype(a)>;
          const auto& b = std::get<P>(s.payload);
          if constexpr (std::is_same_v<P, CategoricalCounts>) {
            add(a.counts, b.counts);
          } else if constexpr (std::is_same_v<P, GaussianMoments>) {
            add(a.weight, b.weight);
            add(a.weighted_sum, b.weighted_sum);
          } else {
            add(a.values, b.values);
          }
        },
        acc.payload);
    acc.contributors += s.contributors;
  }
  return out;
}

/// Statistic of a parameter no node refers to.
inline HStatistic zero_statistic(const ParameterDecl& decl) {
  HStatistic s;
  s.parameter = decl.id;
  s.contributors = 0;
  if (auto* c = std::get_if<CategoricalRows>(&decl.family)) {
    s.payload = CategoricalCounts{c->rows, c->cols, std::vector<double>(c->rows * c->cols, 0.0)};
  } else if (auto* g = std::get_if<GaussianMean>(&decl.family)) {
    s.payload = GaussianMoments{std::vector<double>(g->components, 0.0), std::vector<double>(g->components, 0.0)};
  } else {
    s.payload = GridLogTable{std::vector<double>(std::get<Grid>(decl.family).points.size(), 0.0)};
  }
  return s;
}

enum class OnUndefined { Error, KeepPrevious };

/// Downward message: argmax of log-prior plus the summed h-message. When
/// `previous` is given, rows/components whose argmax is undefined keep their
/// previous value instead of raising ZeroRow/ZeroWeight.
inline ParamValue m_step(const ParameterDecl& decl, const HStatistic& stat, const ParamValue* previous = nullptr) {
  if (stat.payload.index() != decl.family.index())
    throw Error(ErrorCode::FamilyMismatch, "statistic for '" + decl.id + "' does not match its family");
  const std::string where = "parameter '" + decl.id + "'";

  if (auto* fam = std::get_if<CategoricalRows>(&decl.family)) {
    const auto& c = std::get<CategoricalCounts>(stat.payload);
    if (c.counts.size() != fam->rows * fam->cols) throw Error(ErrorCode::ArityMismatch, where + ": count table has the wrong shape");
    const auto* dir = std::get_if<DirichletRows>(&decl.prior);
    CategoricalValue v{fam->rows, fam->cols, std::vector<double>(c.counts.size())};
    for (std::size_t r = 0; r < fam->rows; ++r) {
      double total = 0.0;
      for (std::size_t k = 0; k < fam->cols; ++k) {
        const std::size_t i = r * fam->cols + k;
        double t = c.counts[i];
        if (dir) t = std::max(t + dir->alpha[i] - 1.0, 0.0);
        v.table[i] = t;
        total += t;
      }
      if (total > 0.0) {
        for (std::size_t k = 0; k < fam->cols; ++k) v.table[r * fam->cols + k] /= total;
      } else if (previous) {
        const auto& prev = std::get<CategoricalValue>(*previous);
        for (std::size_t k = 0; k < fam->cols; ++k) v.table[r * fam->cols + k] = prev.at(r, k);
      } else {
        throw Error(ErrorCode::ZeroRow, where + ": row " + std::to_string(r) + " has no mass, argmax undefined");
      }
    }
    return v;
  }

  if (auto* fam = std::get_if<GaussianMean>(&decl.family)) {
    const auto& m = std::get<GaussianMoments>(stat.payload);
    if (m.weight.size() != fam->components || m.weighted_sum.size() != fam->components)
      throw Error(ErrorCode::ArityMismatch, where + ": moment vectors have the wrong length");
    const double var = fam->sigma * fam->sigma;
    GaussianValue v{std::vector<double>(fam->components)};
    for (std::size_t i = 0; i < fam->components; ++i) {
      if (const auto* gp = std::get_if<GaussianPrior>(&decl.prior)) {
        v.means[i] = (m.weighted_sum[i] / var + gp->m0[i] / gp->v0[i]) / (m.weight[i] / var + 1.0 / gp->v0[i]);
      } else if (m.weight[i] > 0.0) {
        v.means[i] = m.weighted_sum[i] / m.weight[i];
      } else if (previous) {
        v.means[i] = std::get<GaussianValue>(*previous).means[i];
      } else {
        throw Error(ErrorCode::ZeroWeight, where + ": component " + std::to_string(i) + " has zero weight, argmax undefined");
      }
    }
    return v;
  }

  const auto& table = std::get<GridLogTable>(stat.payload).values;
  const auto* lp = std::get_if<GridLogPrior>(&decl.prior);
  if (table.size() != std::get<Grid>(decl.family).points.size())
    throw Error(ErrorCode::ArityMismatch, where + ": grid table has the wrong length");
  std::size_t best = kNone;
  double best_value = kNegInf;
  for (std::size_t j = 0; j < table.size(); ++j) {
    const double v = (lp ? lp->log_values[j] : 0.0) + table[j];
    if (v > best_value) {
      best_value = v;
      best = j;
    }
  }
  if (best == kNone) throw Error(ErrorCode::AllNegInf, where + ": every grid point has -inf objective");
  return GridValue{best};
}

/// M-step over every declared parameter; parameters without statistics get a zero statistic.
inline ParamAssignment maximize(const ModelGraph& graph, const HStatisticMap& stats, const ParamAssignment& previous,
                                OnUndefined on_undefined = OnUndefined::Error) {
  ParamAssignment next;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    auto it = stats.find(decl.id);
    const HStatistic stat = it == stats.end() ? zero_statistic(decl) : it->second;
    const ParamValue* prev = on_undefined == OnUndefined::KeepPrevious ? &value_of(previous, decl.id) : nullptr;
    next[decl.id] = m_step(decl, stat, prev);
  }
  return next;
}

/// h-messages of every parameterized node, combined per parameter.
inline HStatisticMap collect_statistics(const ModelGraph& graph, const MessageStore& store, const ParamAssignment& theta) {
  std::vector<HStatistic> all;
  for (std::size_t n = 0; n < graph.num_nodes(); ++n) {
    if (!graph.is_parameterized(n)) continue;
    const auto in = incoming_messages(graph, store, n);
    auto stats = h_message(graph, n, in, theta);
    all.insert(all.end(), std::make_move_iterator(stats.begin()), std::make_move_iterator(stats.end()));
  }
  return combine_h(all);
}

struct Evaluation {
  MessageStore store;
  double log_f = 0.0;
};

/// Sum-product pass plus log f = log f_A + log p_B(y | theta).
inline Evaluation evaluate(const ModelGraph& graph, const ParamAssignment& theta) {
  check_assignment(graph, theta);
  const double lp = log_prior(graph, theta);
  if (lp == kNegInf) throw Error(ErrorCode::PriorZero, "parameter value lies outside the prior support");
  Evaluation e{run_sum_product(graph, theta), 0.0};
  e.log_f = lp + evidence_value(e.store);
  return e;
}

inline double objective(const ModelGraph& graph, const ParamAssignment& theta) { return evaluate(graph, theta).log_f; }

struct EMRecord {
  std::size_t iteration = 0;
  ParamAssignment theta;
  double log_f = 0.0;
  HStatisticMap statistics;  // statistics that produced `theta`; empty at iteration 0
};

/// One E-step/M-step cycle. Returns theta' together with its record.
inline EMRecord em_iterate(const ModelGraph& graph, const ParamAssignment& theta, OnUndefined on_undefined = OnUndefined::Error) {
  const Evaluation current = evaluate(graph, theta);
  EMRecord rec;
  rec.iteration = 1;
  rec.statistics = collect_statistics(graph, current.store, theta);
  rec.theta = maximize(graph, rec.statistics, theta, on_undefined);
  rec.log_f = objective(graph, rec.theta);
  return rec;
}

struct EMConfig {
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;
  double monotonicity_slack = 1e-9;
  Mode mode = Mode::Strict;
  OnUndefined on_undefined = OnUndefined::Error;
};

enum class Termination { Converged, Budget };

struct EMTrace {
  std::vector<EMRecord> records;
  Termination termination = Termination::Budget;
};

/// Repeats E/M cycles until |delta log f| < tolerance or the iteration budget
/// is spent. In strict mode a decrease beyond the slack raises
/// MonotonicityViolation, which on a tree can only mean a bug.
inline EMTrace em_run(const ModelGraph& graph, const ParamAssignment& init, const EMConfig& config) {
  if (!(config.tolerance > 0.0) || !(config.monotonicity_slack > 0.0))
    throw Error(ErrorCode::InvalidValue, "tolerance and monotonicity slack must be positive");
  const ValidationReport report = validate(graph, config.mode);
  if (!report.accepted) {
    if (!report.degree_violations.empty()) throw Error(ErrorCode::DegreeViolation, report.degree_violations.front());
    if (!report.dangling_references.empty()) throw Error(ErrorCode::DanglingReference, report.dangling_references.front());
    throw Error(ErrorCode::NotATree, report.cycles.front());
  }

  EMTrace trace;
  ParamAssignment theta = init;
  Evaluation current = evaluate(graph, theta);
  trace.records.push_back({0, theta, current.log_f, {}});

  for (std::size_t k = 1; k <= config.max_iterations; ++k) {
    HStatisticMap stats = collect_statistics(graph, current.store, theta);
    ParamAssignment next_theta = maximize(graph, stats, theta, config.on_undefined);
    Evaluation next = evaluate(graph, next_theta);
    trace.records.push_back({k, next_theta, next.log_f, std::move(stats)});

    if (config.mode == Mode::Strict && next.log_f < current.log_f - config.monotonicity_slack)
      throw Error(ErrorCode::MonotonicityViolation, "log f dropped from " + std::to_string(current.log_f) + " to " +
                                                        std::to_string(next.log_f) + " at iteration " + std::to_string(k));
    const bool converged = std::abs(next.log_f - current.log_f) < config.tolerance;
    current = std::move(next);
    theta = std::move(next_theta);
    if (converged) {
      trace.termination = Termination::Converged;
      return trace;
    }
  }
  trace.termination = Termination::Budget;
  return trace;
}

}  // namespace emmp
