#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "emmp/cli.hpp"

namespace {

const std::map<std::string, emmp::Mode> kModes{{"strict", emmp::Mode::Strict}, {"experimental", emmp::Mode::Experimental}};
const std::map<std::string, emmp::OnUndefined> kOnUndefined{{"error", emmp::OnUndefined::Error},
                                                            {"keep-previous", emmp::OnUndefined::KeepPrevious}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM parameter estimation by message passing on factor graphs"};
  app.require_subcommand(1);

  emmp::cli::EstimateOptions est;
  std::string init_path, trace_path, output_path;
  auto* estimate = app.add_subcommand("estimate", "run EM and write the trace and final parameters");
  estimate->add_option("--model", est.model, "model file (JSON)")->required();
  estimate->add_option("--data", est.data, "observation file (CSV)")->required();
  estimate->add_option("--init", init_path, "initial parameter file (JSON)");
  estimate->add_option("--max-iter", est.max_iterations, "iteration budget")->capture_default_str();
  estimate->add_option("--tol", est.tolerance, "stop when |delta log f| falls below this")->capture_default_str();
  estimate->add_option("--trace", trace_path, "trace output (CSV)");
  estimate->add_option("--mode", est.mode, "strict|experimental")->transform(CLI::CheckedTransformer(kModes, CLI::ignore_case));
  estimate->add_option("--on-undefined", est.on_undefined, "error|keep-previous")
      ->transform(CLI::CheckedTransformer(kOnUndefined, CLI::ignore_case));
  estimate->add_option("--output", output_path, "final parameter file (JSON); stdout when omitted");

  emmp::cli::LoglikOptions ll;
  auto* loglik = app.add_subcommand("loglik", "print log f(theta)");
  loglik->add_option("--model", ll.model, "model file (JSON)")->required();
  loglik->add_option("--data", ll.data, "observation file (CSV)")->required();
  loglik->add_option("--theta", ll.theta, "parameter file (JSON)")->required();

  emmp::cli::OracleCheckOptions oc;
  std::string oc_init;
  auto* check = app.add_subcommand("oracle-check", "compare message-passing EM with brute-force global EM");
  check->add_option("--model", oc.model, "model file (JSON)")->required();
  check->add_option("--data", oc.data, "observation file (CSV)")->required();
  check->add_option("--init", oc_init, "initial parameter file (JSON)");
  check->add_option("--iters", oc.iterations, "iterations to compare")->capture_default_str();
  check->add_option("--resolution", oc.resolution, "lattice points per dimension")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n" << app.help();
    return emmp::io::kExitModel;
  }

  if (*estimate) {
    if (!init_path.empty()) est.init = init_path;
    if (!trace_path.empty()) est.trace = trace_path;
    if (!output_path.empty()) est.output = output_path;
    return emmp::cli::cmd_estimate(est, std::cout, std::cerr);
  }
  if (*loglik) return emmp::cli::cmd_loglik(ll, std::cout, std::cerr);
  if (!oc_init.empty()) oc.init = oc_init;
  return emmp::cli::cmd_oracle_check(oc, std::cout, std::cerr);
}
