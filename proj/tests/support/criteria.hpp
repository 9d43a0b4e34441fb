#pragma once

// Property checks shared by the property tests (small sizes) and the
// acceptance binary (full sizes). Each returns a verdict and a one-line summary.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "emmp/cli.hpp"
#include "emmp/em.hpp"
#include "emmp/models.hpp"
#include "emmp/oracle.hpp"
#include "support/baum_welch.hpp"
#include "support/fixtures.hpp"
#include "support/random_model.hpp"

namespace emmp::support {

struct Verdict {
  bool pass = true;
  std::string detail;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest observed deviation, meaning depends on the check

  void fail(const std::string& why) {
    if (failures++ == 0) first_failure = why;
    pass = false;
  }
  void note(double deviation) { worst = std::max(worst, deviation); }
  std::string first_failure;
};

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline std::string summarize(const Verdict& v, const std::string& what) {
  std::string s = std::to_string(v.cases) + " " + what + ", worst " + fmt(v.worst);
  if (!v.pass) s += ", " + std::to_string(v.failures) + " failing (first: " + v.first_failure + ")";
  if (!v.detail.empty()) s += ", " + v.detail;
  return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Largest coordinate difference over closed-form families and largest
/// grid-index distance between two assignments.
struct ParamGap {
  double closed_form = 0.0;
  std::size_t grid = 0;
};

inline ParamGap param_gap(const ParamAssignment& a, const ParamAssignment& b) {
  ParamGap gap;
  for (const auto& [id, va] : a) {
    const auto& vb = b.at(id);
    if (auto* ca = std::get_if<CategoricalValue>(&va)) {
      const auto& cb = std::get<CategoricalValue>(vb);
      for (std::size_t i = 0; i < ca->table.size(); ++i) gap.closed_form = std::max(gap.closed_form, std::abs(ca->table[i] - cb.table[i]));
    } else if (auto* ga = std::get_if<GaussianValue>(&va)) {
      const auto& gb = std::get<GaussianValue>(vb);
      for (std::size_t i = 0; i < ga->means.size(); ++i) gap.closed_form = std::max(gap.closed_form, std::abs(ga->means[i] - gb.means[i]));
    } else {
      const auto ia = std::get<GridValue>(va).index, ib = std::get<GridValue>(vb).index;
      gap.grid = std::max(gap.grid, ia > ib ? ia - ib : ib - ia);
    }
  }
  return gap;
}

// 1. EM never decreases the objective.
inline Verdict check_monotonicity(std::uint64_t seed, std::size_t models, double slack = 1e-9) {
  ModelGenerator gen(seed);
  Verdict v;
  RandomModelOptions opt;
  opt.max_hidden = 10;
  opt.max_nodes = 10;
  for (std::size_t m = 0; m < models; ++m) {
    const ModelGraph g = build_graph(gen.model(opt).spec);
    EMConfig cfg;
    cfg.max_iterations = 50;
    cfg.tolerance = 1e-12;
    cfg.monotonicity_slack = INFINITY;  // measured here instead
    ++v.cases;
    try {
      const EMTrace t = em_run(g, gen.assignment(g), cfg);
      for (std::size_t k = 1; k < t.records.size(); ++k) {
        const double drop = t.records[k - 1].log_f - t.records[k].log_f;
        v.note(drop);
        if (drop > slack) {
          v.fail("model " + std::to_string(m) + " step " + std::to_string(k) + " drops " + fmt(drop));
          break;
        }
      }
    } catch (const Error& e) {
      v.fail("model " + std::to_string(m) + ": " + e.what());
    }
  }
  return v;
}

// 2. Message-passing EM equals enumerated global EM, iteration by iteration.
inline Verdict check_global_local(std::uint64_t seed, std::size_t models, std::size_t iterations = 10, double tol = 1e-9,
                                  std::size_t desk_lattice_resolution = 10001) {
  Verdict v;
  auto compare = [&](const std::string& name, const ModelGraph& g, ParamAssignment theta, bool lattice) {
    ++v.cases;
    const oracle::ThetaGrid grid = oracle::default_theta_grid(g, desk_lattice_resolution);
    try {
      for (std::size_t k = 1; k <= iterations; ++k) {
        const ParamAssignment local = em_iterate(g, theta).theta;
        const ParamGap gap = param_gap(local, oracle::global_em_step(g, theta));
        v.note(gap.closed_form);
        if (gap.closed_form > tol || gap.grid > 1) {
          v.fail(name + " iteration " + std::to_string(k) + " deviates by " + fmt(gap.closed_form));
          return;
        }
        if (lattice) {
          const ParamGap lgap = param_gap(local, oracle::global_em_step_lattice(g, theta, grid));
          if (lgap.closed_form > 1.0 / static_cast<double>(desk_lattice_resolution - 1) + tol || lgap.grid > 1) {
            v.fail(name + " iteration " + std::to_string(k) + " is more than one lattice cell from the lattice argmax");
            return;
          }
        }
        theta = local;
      }
    } catch (const Error& e) {
      v.fail(name + ": " + e.what());
    }
  };
  compare("desk hmm", build_hmm(desk_hmm_spec(), kDeskObservations), desk_init(), desk_lattice_resolution > 1);
  ModelGenerator gen(seed);
  RandomModelOptions opt;
  opt.max_hidden = 6;
  for (std::size_t m = 0; m < models; ++m) {
    const ModelGraph g = build_graph(gen.model(opt).spec);
    compare("model " + std::to_string(m), g, gen.assignment(g), false);
  }
  return v;
}

// 3. Transition updates agree with textbook Baum-Welch.
inline Verdict check_baum_welch(std::size_t iterations = 10, double tol = 1e-10) {
  Verdict v;
  const ModelGraph g = build_hmm(desk_hmm_spec(), kDeskObservations);
  ParamAssignment theta = desk_init();
  for (std::size_t it = 1; it <= iterations; ++it) {
    const auto& a = std::get<CategoricalValue>(theta.at("A"));
    const DiscreteHmm hmm{{0.6, 0.4}, {{a.at(0, 0), a.at(0, 1)}, {a.at(1, 0), a.at(1, 1)}}, {{0.9, 0.1}, {0.2, 0.8}}};
    const auto expected = baum_welch_transition(hmm, kDeskObservations);
    theta = em_iterate(g, theta).theta;
    const auto& next = std::get<CategoricalValue>(theta.at("A"));
    ++v.cases;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const double d = std::abs(next.at(i, j) - expected[i][j]);
        v.note(d);
        if (d > tol) v.fail("iteration " + std::to_string(it) + " entry " + std::to_string(i) + "," + std::to_string(j));
      }
  }
  return v;
}

// 4. The auxiliary-function lemma and the inequality chain of the EM proof.
inline Verdict check_lemma(std::uint64_t seed, std::size_t models, std::size_t pairs, std::size_t trajectory = 5, double tol = 1e-12) {
  ModelGenerator gen(seed);
  Verdict v;
  RandomModelOptions opt;
  opt.max_hidden = 6;
  for (std::size_t m = 0; m < models; ++m) {
    const ModelGraph g = build_graph(gen.model(opt).spec);
    const std::string name = "model " + std::to_string(m);
    for (std::size_t p = 0; p < pairs; ++p) {
      const ParamAssignment a = gen.assignment(g), b = gen.assignment(g);
      const double fa = oracle::brute_f(g, a);
      const double eq = oracle::aux_function(g, a, a);
      const double rel = std::abs(eq - fa) / std::max(std::abs(fa), 1e-300);
      const double excess = oracle::aux_function(g, a, b) - fa;
      v.note(rel);
      ++v.cases;
      if (rel > tol) v.fail(name + " equality off by " + fmt(rel));
      if (excess > tol) v.fail(name + " inequality exceeded by " + fmt(excess));
    }
    ParamAssignment theta = gen.assignment(g);
    try {
      for (std::size_t k = 0; k < trajectory; ++k) {
        const ParamAssignment next = oracle::global_em_step(g, theta);
        const double f0 = oracle::brute_f(g, theta), f1 = oracle::brute_f(g, next);
        const double mid = oracle::aux_function(g, next, theta);
        const double scale = tol * std::max(1.0, std::abs(f1));
        if (!(f0 <= mid + scale && mid <= f1 + scale)) v.fail(name + " chain breaks at step " + std::to_string(k));
        theta = next;
      }
    } catch (const Error& e) {
      v.fail(name + ": " + e.what());
    }
  }
  return v;
}

/// Models used by the corpus-wide checks: the shipped examples plus random trees.
inline std::vector<std::pair<ModelGraph, ParamAssignment>> corpus(std::uint64_t seed, std::size_t random_models, std::size_t max_hidden) {
  std::vector<std::pair<ModelGraph, ParamAssignment>> out;
  out.emplace_back(build_hmm(desk_hmm_spec(), kDeskObservations), desk_init());
  HmmSpec split = desk_hmm_spec();
  split.split = true;
  out.emplace_back(build_hmm(split, kDeskObservations), desk_init());
  HmmSpec gauss;
  gauss.n = 6;
  out.emplace_back(build_gaussian_mixture_chain(gauss, {-1.2, -0.8, 1.1, 0.9, 1.3, -1.0}),
                   ParamAssignment{{"A", CategoricalValue{2, 2, {0.5, 0.5, 0.5, 0.5}}}, {"mu", GaussianValue{{-0.5, 0.5}}}});
  ModelGenerator gen(seed);
  RandomModelOptions opt;
  opt.max_hidden = max_hidden;
  for (std::size_t m = 0; m < random_models; ++m) {
    ModelGraph g = build_graph(gen.model(opt).spec);
    ParamAssignment theta = gen.assignment(g);
    out.emplace_back(std::move(g), std::move(theta));
  }
  return out;
}

// 5. Every node of a tree reports the same normalizer.
inline Verdict check_normalizers(std::uint64_t seed, std::size_t random_models, double tol = 1e-9) {
  Verdict v;
  for (const auto& [g, theta] : corpus(seed, random_models, 10)) {
    const MessageStore store = run_sum_product(g, theta);
    const auto comps = validate(g, Mode::Strict).components;
    for (const auto& comp : comps) {
      if (comp.nodes.empty()) continue;
      const double ref = node_joint_posterior(g, store, *g.node_index(comp.nodes[0]), theta).normalizer;
      for (const auto& id : comp.nodes) {
        const std::size_t n = *g.node_index(id);
        ++v.cases;
        // Normalizers are kept in the log domain; compare them as ratios.
        const double rel = std::abs(std::expm1(node_joint_posterior(g, store, n, theta).normalizer - ref));
        v.note(rel);
        if (rel > tol) v.fail("node " + id + " differs by " + fmt(rel));
      }
    }
  }
  return v;
}

// 6. Sum-product marginals and node joints equal enumeration.
inline Verdict check_exactness(std::uint64_t seed, std::size_t random_models, double tol = 1e-12) {
  Verdict v;
  for (const auto& [g, theta] : corpus(seed, random_models, 12)) {
    if (oracle::hidden_state_count(g) > (std::size_t{1} << 12)) continue;
    ++v.cases;
    const MessageStore store = run_sum_product(g, theta);
    const auto brute = oracle::brute_marginals(g, theta);
    double worst = 0.0;
    for (std::size_t e = 0; e < g.num_variables(); ++e) {
      const auto m = marginal(store, g, e);
      for (std::size_t s = 0; s < m.size(); ++s) worst = std::max(worst, std::abs(m[s] - brute.edges[e][s]));
    }
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const auto p = node_joint_posterior(g, store, n, theta);
      for (std::size_t i = 0; i < p.table.size(); ++i) worst = std::max(worst, std::abs(p.table[i] - brute.nodes[n][i]));
    }
    v.note(worst);
    if (worst > tol) v.fail("model with " + std::to_string(g.num_variables()) + " edges off by " + fmt(worst));
  }
  return v;
}

// 7. Scaling one incoming message leaves the M-step outputs unchanged.
inline Verdict check_scale_invariance(std::uint64_t seed, std::size_t models, std::size_t trials_per_model = 3) {
  ModelGenerator gen(seed);
  Verdict v;
  std::size_t closed_checks = 0, closed_exact = 0;
  RandomModelOptions opt;
  opt.max_hidden = 8;
  for (std::size_t m = 0; m < models; ++m) {
    const ModelGraph g = build_graph(gen.model(opt).spec);
    const ParamAssignment theta = gen.assignment(g);
    const MessageStore store = run_sum_product(g, theta);
    std::vector<std::vector<HStatistic>> per_node(g.num_nodes());
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      if (g.is_parameterized(n)) per_node[n] = h_message(g, n, incoming_messages(g, store, n), theta);
    auto run_m_step = [&](const std::vector<std::vector<HStatistic>>& h) {
      std::vector<HStatistic> all;
      for (const auto& hs : h) all.insert(all.end(), hs.begin(), hs.end());
      return maximize(g, combine_h(all), theta);
    };
    const ParamAssignment base = run_m_step(per_node);
    for (std::size_t t = 0; t < trials_per_model; ++t) {
      std::size_t n = gen.index(g.num_nodes());
      while (!g.is_parameterized(n)) n = (n + 1) % g.num_nodes();
      auto incoming = incoming_messages(g, store, n);
      const std::size_t slot = gen.index(incoming.size());
      Message scaled = *incoming[slot];
      double c = gen.uniform(0.01, 100.0);
      while (c <= 0.01) c = gen.uniform(0.01, 100.0);
      for (double& x : scaled.values) x *= c;
      incoming[slot] = &scaled;
      auto h = per_node;
      h[n] = h_message(g, n, incoming, theta);
      const ParamAssignment out = run_m_step(h);
      ++v.cases;
      for (const auto& [id, value] : base) {
        const bool grid = std::holds_alternative<GridValue>(value);
        if (!grid) ++closed_checks;
        const bool same = value == out.at(id);
        if (!grid && same) ++closed_exact;
        if (!same) {
          const ParamGap gap = param_gap({{id, value}}, {{id, out.at(id)}});
          v.note(grid ? static_cast<double>(gap.grid) : gap.closed_form);
          v.fail("parameter " + id + (grid ? " changed index" : " differs by " + fmt(gap.closed_form)) + " under c = " + fmt(c));
        }
      }
    }
  }
  v.detail = std::to_string(closed_exact) + "/" + std::to_string(closed_checks) + " closed-form outputs bit-identical";
  return v;
}

// 8. Local h-tables add up to the global h on grid-only models.
inline Verdict check_h_decomposition(std::uint64_t seed, std::size_t models, double tol = 1e-9) {
  ModelGenerator gen(seed);
  Verdict v;
  RandomModelOptions opt;
  opt.max_hidden = 8;
  opt.categorical = false;
  opt.gaussian = false;
  opt.grid = true;
  for (std::size_t m = 0; m < models; ++m) {
    const ModelGraph g = build_graph(gen.model(opt).spec);
    const ParamAssignment theta = gen.assignment(g);
    const HStatisticMap local = collect_statistics(g, run_sum_product(g, theta), theta);
    for (const auto& [id, stat] : local) {
      const auto& table = std::get<GridLogTable>(stat.payload).values;
      std::vector<ParamAssignment> candidates;
      for (std::size_t j = 0; j < table.size(); ++j) {
        ParamAssignment c = theta;
        c[id] = GridValue{j};
        candidates.push_back(std::move(c));
      }
      const std::vector<double> global = oracle::enumerate_h(g, theta, candidates);
      const double lmax = *std::max_element(table.begin(), table.end());
      const double gmax = *std::max_element(global.begin(), global.end());
      ++v.cases;
      for (std::size_t j = 0; j < table.size(); ++j) {
        const double a = table[j] - lmax, b = global[j] - gmax;
        if (std::isinf(a) || std::isinf(b)) {
          if (a != b) v.fail("model " + std::to_string(m) + " " + id + " support differs at point " + std::to_string(j));
          continue;
        }
        v.note(std::abs(a - b));
        if (std::abs(a - b) > tol) v.fail("model " + std::to_string(m) + " " + id + " point " + std::to_string(j) + " off by " + fmt(std::abs(a - b)));
      }
    }
  }
  return v;
}

// 9. The CLI is reproducible and its self-check passes on the desk HMM.
inline Verdict check_cli() {
  Verdict v;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("emmp_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  cli::EstimateOptions opt;
  opt.model = data_path("desk_hmm.model.json");
  opt.data = data_path("desk_hmm.csv");
  opt.init = data_path("desk_hmm.init.json");
  std::ostringstream out, err;
  std::string traces[2];
  for (int r = 0; r < 2; ++r) {
    opt.trace = (dir / ("trace" + std::to_string(r) + ".csv")).string();
    ++v.cases;
    if (cli::cmd_estimate(opt, out, err) != 0) v.fail("estimate failed: " + err.str());
    traces[r] = io::detail::read_file(*opt.trace);
  }
  if (traces[0] != traces[1] || traces[0].empty()) v.fail("traces differ between runs");
  cli::OracleCheckOptions check;
  check.model = opt.model;
  check.data = opt.data;
  check.init = opt.init;
  std::ostringstream check_out;
  ++v.cases;
  const int code = cli::cmd_oracle_check(check, check_out, err);
  if (code != 0) v.fail("oracle-check exited " + std::to_string(code));
  v.detail = "oracle-check exit " + std::to_string(code);
  fs::remove_all(dir);
  return v;
}

}  // namespace emmp::support
