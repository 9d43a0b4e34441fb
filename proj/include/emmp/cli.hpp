#pragma once

// The three command-line operations as plain functions so tests can drive
// them without spawning a process. Each returns the process exit status and
// writes diagnostics, one line per error, to `err`.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "emmp/em.hpp"
#include "emmp/io.hpp"
#include "emmp/oracle.hpp"

namespace emmp::cli {

struct EstimateOptions {
  std::string model;
  std::string data;
  std::optional<std::string> init;
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;
  std::optional<std::string> trace;
  Mode mode = Mode::Strict;
  OnUndefined on_undefined = OnUndefined::Error;
  std::optional<std::string> output;  // final parameters; stdout when absent
};

struct LoglikOptions {
  std::string model;
  std::string data;
  std::string theta;
};

struct OracleCheckOptions {
  std::string model;
  std::string data;
  std::optional<std::string> init;
  std::size_t iterations = 10;
  std::size_t resolution = 10001;
};

namespace detail {

inline ModelGraph load_bound_model(const std::string& model_path, const std::string& data_path) {
  const ModelSpec spec = io::load_model_spec(model_path);
  build_graph(spec);  // report model errors before data errors
  return io::bind_data(spec, io::parse_data(io::detail::read_file(data_path), spec));
}

inline ParamAssignment load_init(const ModelGraph& graph, const std::optional<std::string>& path) {
  if (!path) return default_assignment(graph);
  return io::parse_theta(io::detail::read_file(*path), graph);
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::SchemaError, "cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw Error(ErrorCode::SchemaError, "cannot write '" + path + "'");
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << e.what() << "\n";
    return io::exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return io::kExitModel;
  }
}

}  // namespace detail

inline int cmd_estimate(const EstimateOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ModelGraph graph = detail::load_bound_model(opt.model, opt.data);
    const ParamAssignment init = detail::load_init(graph, opt.init);
    EMConfig config;
    config.max_iterations = opt.max_iterations;
    config.tolerance = opt.tolerance;
    config.mode = opt.mode;
    config.on_undefined = opt.on_undefined;
    const EMTrace trace = em_run(graph, init, config);
    if (opt.trace) detail::write_file(*opt.trace, io::format_trace(graph, trace));
    const std::string theta = io::serialize_theta(trace.records.back().theta);
    if (opt.output) {
      detail::write_file(*opt.output, theta);
    } else {
      out << theta;
    }
    return io::kExitOk;
  });
}

inline int cmd_loglik(const LoglikOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ModelGraph graph = detail::load_bound_model(opt.model, opt.data);
    const ParamAssignment theta = io::parse_theta(io::detail::read_file(opt.theta), graph);
    out << io::format_real(objective(graph, theta)) << "\n";
    return io::kExitOk;
  });
}

namespace detail {

/// Largest absolute difference over categorical and Gaussian coordinates and
/// largest grid-index distance, between two assignments.
struct Deviation {
  double closed_form = 0.0;
  std::size_t grid_cells = 0;
};

inline Deviation deviation(const ModelGraph& graph, const ParamAssignment& a, const ParamAssignment& b) {
  Deviation d;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& id = graph.parameter(p).id;
    const auto& va = value_of(a, id);
    const auto& vb = value_of(b, id);
    if (auto* ca = std::get_if<CategoricalValue>(&va)) {
      const auto& cb = std::get<CategoricalValue>(vb);
      for (std::size_t i = 0; i < ca->table.size(); ++i) d.closed_form = std::max(d.closed_form, std::abs(ca->table[i] - cb.table[i]));
    } else if (auto* ga = std::get_if<GaussianValue>(&va)) {
      const auto& gb = std::get<GaussianValue>(vb);
      for (std::size_t i = 0; i < ga->means.size(); ++i) d.closed_form = std::max(d.closed_form, std::abs(ga->means[i] - gb.means[i]));
    } else {
      const auto ia = std::get<GridValue>(va).index, ib = std::get<GridValue>(vb).index;
      d.grid_cells = std::max(d.grid_cells, ia > ib ? ia - ib : ib - ia);
    }
  }
  return d;
}

/// Largest coordinate distance between `em` and a lattice point, in lattice cells.
inline double lattice_cells(const ModelGraph& graph, const ParamAssignment& em, const ParamAssignment& lattice, const oracle::ThetaGrid& grid) {
  double worst = 0.0;
  for (std::size_t p = 0; p < graph.num_parameters(); ++p) {
    const auto& decl = graph.parameter(p);
    const double cell = oracle::lattice_cell(decl, grid);
    const auto& va = value_of(em, decl.id);
    const auto& vb = value_of(lattice, decl.id);
    if (auto* ca = std::get_if<CategoricalValue>(&va)) {
      const auto& cb = std::get<CategoricalValue>(vb);
      for (std::size_t i = 0; i < ca->table.size(); ++i) worst = std::max(worst, std::abs(ca->table[i] - cb.table[i]) / cell);
    } else if (auto* ga = std::get_if<GaussianValue>(&va)) {
      const auto& gb = std::get<GaussianValue>(vb);
      for (std::size_t i = 0; i < ga->means.size(); ++i) worst = std::max(worst, std::abs(ga->means[i] - gb.means[i]) / cell);
    } else {
      const auto ia = std::get<GridValue>(va).index, ib = std::get<GridValue>(vb).index;
      worst = std::max(worst, static_cast<double>(ia > ib ? ia - ib : ib - ia));
    }
  }
  return worst;
}

/// Rough count of kernel evaluations one lattice step costs.
inline double lattice_work(const ModelGraph& graph, const std::vector<oracle::LatticeBlock>& blocks) {
  double candidates = 0.0;
  for (const auto& b : blocks) candidates += static_cast<double>(b.candidates.size());
  return candidates * static_cast<double>(oracle::hidden_state_count(graph)) * static_cast<double>(graph.num_nodes());
}

}  // namespace detail

inline constexpr double kClosedFormTolerance = 1e-9;
inline constexpr double kLatticeWorkBudget = 2e9;

/// Runs em_iterate and the enumerating global step side by side. The
/// closed-form oracle follows its own trajectory from the same start; the
/// lattice oracle is applied to each EM iterate and must land within one
/// lattice cell of the EM output.
inline int cmd_oracle_check(const OracleCheckOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (opt.resolution < 2) throw Error(ErrorCode::InvalidValue, "--resolution must be at least 2");
    const ModelGraph graph = detail::load_bound_model(opt.model, opt.data);
    oracle::hidden_state_count(graph);
    const ParamAssignment init = detail::load_init(graph, opt.init);
    const ValidationReport report = validate(graph, Mode::Strict);
    if (!report.accepted) throw Error(ErrorCode::NotATree, "oracle-check needs a strict-valid tree model");

    const oracle::ThetaGrid grid = oracle::default_theta_grid(graph, opt.resolution);
    bool lattice_enabled = true;
    try {
      lattice_enabled = detail::lattice_work(graph, oracle::lattice_blocks(graph, init, grid)) <= kLatticeWorkBudget;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooLarge) throw;
      lattice_enabled = false;
    }
    if (!lattice_enabled) out << "lattice comparison skipped: lattice too large at this resolution\n";

    bool ok = true;
    ParamAssignment em_theta = init;
    ParamAssignment oracle_theta = init;
    out << "iteration 0 closed_form_dev 0 grid_cells 0" << (lattice_enabled ? " lattice_cells 0" : "") << "\n";
    for (std::size_t k = 1; k <= opt.iterations; ++k) {
      const ParamAssignment em_next = em_iterate(graph, em_theta).theta;
      oracle_theta = oracle::global_em_step(graph, oracle_theta);
      const auto dev = detail::deviation(graph, em_next, oracle_theta);
      bool step_ok = dev.closed_form <= kClosedFormTolerance && dev.grid_cells <= 1;
      out << "iteration " << k << " closed_form_dev " << io::format_real(dev.closed_form) << " grid_cells " << dev.grid_cells;
      if (lattice_enabled) {
        const double cells = detail::lattice_cells(graph, em_next, oracle::global_em_step_lattice(graph, em_theta, grid), grid);
        step_ok = step_ok && cells <= 1.0 + 1e-9;
        out << " lattice_cells " << io::format_real(cells);
      }
      out << (step_ok ? " ok" : " FAIL") << "\n";
      ok = ok && step_ok;
      em_theta = em_next;
    }
    out << (ok ? "oracle check passed" : "oracle check failed") << "\n";
    return ok ? io::kExitOk : io::kExitCheckFailed;
  });
}

}  // namespace emmp::cli
