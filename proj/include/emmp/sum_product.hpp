#pragma once

// Exact sum-product on cycle-free models at a fixed parameter value.
//
// Messages are kept normalized; the factor removed at each step is carried in
// a log-scale side channel so that values * exp(log_scale) is always the
// unscaled message. With that convention the log normalizer of every node
// posterior is the log evidence of its component, whichever node is used.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "emmp/error.hpp"
#include "emmp/graph.hpp"
#include "emmp/numeric.hpp"

namespace emmp {

inline constexpr std::size_t kOpenEnd = static_cast<std::size_t>(-2);  // outward end of a half-edge
inline constexpr std::size_t kBoundary = static_cast<std::size_t>(-3);  // source of a half-edge's inward message

struct Message {
  std::size_t edge = kNone;
  std::size_t toward = kNone;  // node index or kOpenEnd
  std::vector<double> values;
  double log_scale = 0.0;
};

struct ScheduledMessage {
  std::size_t edge = kNone;
  std::size_t from = kNone;    // node index or kBoundary
  std::size_t toward = kNone;  // node index or kOpenEnd
  bool operator==(const ScheduledMessage&) const = default;
};
using Schedule = std::vector<ScheduledMessage>;

struct Posterior {
  std::size_t node = kNone;
  std::vector<double> table;  // over the node's local joint states
  double normalizer = 0.0;    // log of the unnormalized table sum, log-scales included
};

namespace detail {

/// Normalizes raw message values; `log_scale` is added to log(sum).
inline Message make_message(std::size_t edge, std::size_t toward, std::vector<double> raw, double log_scale) {
  CompensatedSum s;
  for (double v : raw) s += v;
  const double total = s.value();
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorCode::DegenerateEvidence, "message on edge " + std::to_string(edge) + " has no positive mass");
  for (double& v : raw) v /= total;
  return Message{edge, toward, std::move(raw), log_scale + std::log(total)};
}

/// Sum over all local states except `out` of kernel times incoming messages.
inline std::vector<double> marginalize_out(std::span<const double> kernel, std::span<const std::size_t> radices,
                                           std::span<const Message* const> incoming, std::size_t out) {
  std::vector<double> result(radices[out], 0.0);
  JointStateCounter z({radices.begin(), radices.end()});
  const auto& d = z.digits();
  for (std::size_t i = 0; i < kernel.size(); ++i, z.next()) {
    double w = kernel[i];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < radices.size(); ++j)
      if (j != out) w *= incoming[j]->values[d[j]];
    result[d[out]] += w;
  }
  return result;
}

inline Posterior posterior_from_table(std::size_t node, std::span<const double> kernel, std::span<const std::size_t> radices,
                                      std::span<const Message* const> incoming) {
  Posterior post;
  post.node = node;
  post.table.assign(kernel.begin(), kernel.end());
  double log_scale = 0.0;
  for (std::size_t j = 0; j < radices.size(); ++j) {
    if (incoming[j] == nullptr) throw Error(ErrorCode::InvalidValue, "missing incoming message at local position " + std::to_string(j));
    log_scale += incoming[j]->log_scale;
  }
  JointStateCounter z({radices.begin(), radices.end()});
  const auto& d = z.digits();
  CompensatedSum s;
  for (std::size_t i = 0; i < post.table.size(); ++i, z.next()) {
    double w = post.table[i];
    for (std::size_t j = 0; j < radices.size(); ++j) w *= incoming[j]->values[d[j]];
    post.table[i] = w;
    s += w;
  }
  const double total = s.value();
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorCode::DegenerateEvidence, "node " + std::to_string(node) + " has zero posterior mass");
  for (double& w : post.table) w /= total;
  post.normalizer = std::log(total) + log_scale;
  return post;
}

inline std::size_t slot_index(std::span<const std::size_t> endpoints, std::size_t edge, std::size_t toward) {
  return 2 * edge + (toward == endpoints[0] ? 0 : 1);
}

}  // namespace detail

class MessageStore {
 public:
  const Message& get(std::size_t edge, std::size_t toward) const {
    const auto& m = slots_.at(2 * edge + (toward == first_endpoint_.at(edge) ? 0 : 1));
    if (!m) throw Error(ErrorCode::InvalidValue, "message on edge " + std::to_string(edge) + " was never computed");
    return *m;
  }
  bool complete() const {
    for (const auto& m : slots_)
      if (!m) return false;
    return true;
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& m : slots_) n += m.has_value();
    return n;
  }
  std::span<const double> component_log_evidence() const { return component_log_evidence_; }

 private:
  friend MessageStore run_sum_product(const ModelGraph&, const ParamAssignment&);
  std::vector<std::optional<Message>> slots_;
  std::vector<std::size_t> first_endpoint_;
  std::vector<double> component_log_evidence_;
};

/// Two-pass schedule per connected component: leaves toward the root (the
/// highest-index node), then root back out to every edge end.
inline Schedule schedule_tree(const ModelGraph& graph) {
  for (std::size_t v = 0; v < graph.num_variables(); ++v) {
    const std::size_t deg = graph.edge_nodes(v).size();
    if (deg == 0 || deg > 2)
      throw Error(ErrorCode::DegreeViolation, "variable '" + graph.variable(v).id + "' has degree " + std::to_string(deg));
  }
  const ValidationReport report = validate(graph, Mode::Strict);
  if (!report.cycles.empty()) throw Error(ErrorCode::NotATree, report.cycles.front());

  Schedule inward, outward;
  std::vector<std::size_t> parent_edge(graph.num_nodes(), kNone);
  std::vector<bool> seen(graph.num_nodes(), false);
  for (const auto& comp : graph.components()) {
    const std::size_t root = comp.back();
    std::vector<std::size_t> order{root};
    seen[root] = true;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::size_t n = order[i];
      for (std::size_t e : graph.node_edges(n)) {
        if (e == parent_edge[n]) continue;
        for (std::size_t m : graph.edge_nodes(e)) {
          if (m == n || seen[m]) continue;
          seen[m] = true;
          parent_edge[m] = e;
          order.push_back(m);
        }
      }
    }
    for (std::size_t i = order.size(); i-- > 0;) {
      const std::size_t n = order[i];
      for (std::size_t e : graph.node_edges(n))
        if (graph.edge_nodes(e).size() == 1) inward.push_back({e, kBoundary, n});
      if (parent_edge[n] != kNone) {
        const std::size_t e = parent_edge[n];
        const auto ends = graph.edge_nodes(e);
        inward.push_back({e, n, ends[0] == n ? ends[1] : ends[0]});
      }
    }
    for (std::size_t n : order) {
      for (std::size_t e : graph.node_edges(n)) {
        if (e == parent_edge[n]) continue;
        const auto ends = graph.edge_nodes(e);
        if (ends.size() == 1) {
          outward.push_back({e, n, kOpenEnd});
        } else {
          outward.push_back({e, n, ends[0] == n ? ends[1] : ends[0]});
        }
      }
    }
  }
  inward.insert(inward.end(), outward.begin(), outward.end());
  return inward;
}

/// Message out of `node` along local position `out`, given messages toward the
/// node on every other local position (the entry at `out` is ignored).
inline Message node_message(const ModelGraph& graph, std::size_t node, std::span<const Message* const> incoming,
                            const ParamAssignment& theta, std::size_t out) {
  const auto radices = graph.local_radices(node);
  if (incoming.size() != radices.size() || out >= radices.size())
    throw Error(ErrorCode::ArityMismatch, "node_message needs one incoming slot per local edge");
  double log_scale = 0.0;
  for (std::size_t j = 0; j < radices.size(); ++j) {
    if (j == out) continue;
    if (incoming[j] == nullptr) throw Error(ErrorCode::InvalidValue, "missing incoming message at local position " + std::to_string(j));
    log_scale += incoming[j]->log_scale;
  }
  const std::vector<double> kernel = kernel_table(graph, node, theta);
  const std::size_t edge = graph.node_edges(node)[out];
  const auto ends = graph.edge_nodes(edge);
  std::size_t toward = kOpenEnd;
  for (std::size_t m : ends)
    if (m != node) toward = m;
  return detail::make_message(edge, toward, detail::marginalize_out(kernel, radices, incoming, out), log_scale);
}

/// Joint posterior of a node's local variables from explicit incoming messages.
inline Posterior node_posterior(const ModelGraph& graph, std::size_t node, std::span<const Message* const> incoming,
                                const ParamAssignment& theta) {
  const auto radices = graph.local_radices(node);
  if (incoming.size() != radices.size()) throw Error(ErrorCode::ArityMismatch, "node_posterior needs one incoming message per local edge");
  const std::vector<double> kernel = kernel_table(graph, node, theta);
  return detail::posterior_from_table(node, kernel, radices, incoming);
}

/// Messages toward `node`, in local order, read from a complete store.
inline std::vector<const Message*> incoming_messages(const ModelGraph& graph, const MessageStore& store, std::size_t node) {
  std::vector<const Message*> in;
  for (std::size_t e : graph.node_edges(node)) in.push_back(&store.get(e, node));
  return in;
}

inline MessageStore run_sum_product(const ModelGraph& graph, const ParamAssignment& theta) {
  const Schedule schedule = schedule_tree(graph);

  MessageStore store;
  store.slots_.assign(2 * graph.num_variables(), std::nullopt);
  store.first_endpoint_.resize(graph.num_variables());
  for (std::size_t v = 0; v < graph.num_variables(); ++v) store.first_endpoint_[v] = graph.edge_nodes(v)[0];

  std::vector<std::vector<double>> kernels(graph.num_nodes());
  for (std::size_t n = 0; n < graph.num_nodes(); ++n) kernels[n] = kernel_table(graph, n, theta);

  std::vector<const Message*> in;
  for (const auto& step : schedule) {
    const auto ends = graph.edge_nodes(step.edge);
    Message msg;
    if (step.from == kBoundary) {
      msg = detail::make_message(step.edge, step.toward, graph.evidence(step.edge), 0.0);
    } else {
      const std::size_t node = step.from;
      const auto edges = graph.node_edges(node);
      in.assign(edges.size(), nullptr);
      std::size_t out = kNone;
      double log_scale = 0.0;
      for (std::size_t j = 0; j < edges.size(); ++j) {
        if (edges[j] == step.edge) {
          out = j;
          continue;
        }
        const auto& m = store.slots_[detail::slot_index(graph.edge_nodes(edges[j]), edges[j], node)];
        in[j] = &*m;
        log_scale += m->log_scale;
      }
      std::vector<double> raw = detail::marginalize_out(kernels[node], graph.local_radices(node), in, out);
      if (step.toward != kOpenEnd) {
        const auto& ev = graph.evidence(step.edge);
        for (std::size_t s = 0; s < raw.size(); ++s) raw[s] *= ev[s];
      }
      msg = detail::make_message(step.edge, step.toward, std::move(raw), log_scale);
    }
    store.slots_[detail::slot_index(ends, step.edge, step.toward)] = std::move(msg);
  }

  for (const auto& comp : graph.components()) {
    const std::size_t n = comp.front();
    const auto incoming = incoming_messages(graph, store, n);
    store.component_log_evidence_.push_back(
        detail::posterior_from_table(n, kernels[n], graph.local_radices(n), incoming).normalizer);
  }
  return store;
}

/// Normalized marginal of one variable: product of its two directed messages.
inline std::vector<double> marginal(const MessageStore& store, const ModelGraph& graph, std::size_t edge) {
  const auto ends = graph.edge_nodes(edge);
  const Message& a = store.get(edge, ends[0]);
  const Message& b = store.get(edge, ends.size() == 2 ? ends[1] : kOpenEnd);
  std::vector<double> raw(a.values.size());
  for (std::size_t s = 0; s < raw.size(); ++s) raw[s] = a.values[s] * b.values[s];
  return detail::make_message(edge, kNone, std::move(raw), 0.0).values;
}

inline Posterior node_joint_posterior(const ModelGraph& graph, const MessageStore& store, std::size_t node,
                                      const ParamAssignment& theta) {
  return node_posterior(graph, node, incoming_messages(graph, store, node), theta);
}

/// log p_B(y | theta): sum of the per-component log normalizers.
inline double evidence_value(const MessageStore& store) {
  double s = 0.0;
  for (double c : store.component_log_evidence()) s += c;
  return s;
}

}  // namespace emmp
