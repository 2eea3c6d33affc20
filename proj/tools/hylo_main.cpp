// hylo: variational soliton workbench.
//   hylo solve   --config run.cfg [--out DIR] ...
//   hylo evolve  --config run.cfg ...
//   hylo verify  --config run.cfg ...
//   hylo testfn  --config run.cfg ...
// Exit status: 0 success, 1 configuration error, 2 numerical failure.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "hylo/config.hpp"
#include "hylo/run.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  bool deterministic = false;
  hylo::ConfigOverrides ov;
};

void add_common(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file")
      ->required();
  cmd->add_option("--out", args.ov.out_dir,
                  "output directory (overrides [output] dir)");
  cmd->add_flag("--deterministic", args.deterministic,
                "force the configured rng seed");
  cmd->add_option("--seed", args.ov.rng_seed,
                  "rng seed (overrides rng-seed)");
  cmd->add_option("--max-iters", args.ov.max_iters,
                  "iteration budget (overrides max-iters)");
  cmd->add_option("--tol", args.ov.tol,
                  "gradient tolerance (overrides tol)");
}

int dispatch(const std::string& command, CliArgs args) {
  if (args.deterministic) args.ov.deterministic = true;
  return hylo::detail::guarded(command, std::cerr, [&]() -> int {
    hylo::RunConfig cfg = hylo::parse_config_file(args.config_path);
    hylo::apply_overrides(cfg, args.ov);
    if (command == "solve") return hylo::run_solve(cfg);
    if (command == "evolve") return hylo::run_evolve(cfg);
    if (command == "verify") return hylo::run_verify(cfg);
    return hylo::run_testfn(cfg);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational solver and verification workbench for "
               "Schroedinger and Klein-Gordon solitary waves"};
  app.require_subcommand(1);

  CliArgs solve_args, evolve_args, verify_args, testfn_args;
  add_common(app.add_subcommand("solve",
                                "minimize the free functional and "
                                "cross-check the constrained problem"),
             solve_args);
  add_common(app.add_subcommand("evolve",
                                "integrate a reference state and monitor "
                                "conservation and orbital distance"),
             evolve_args);
  add_common(app.add_subcommand("verify",
                                "run the structural property suite"),
             verify_args);
  add_common(app.add_subcommand("testfn",
                                "sweep the explicit test-function families"),
             testfn_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    hylo::detail::emit_error_json(std::cerr, "cli", "config", e.what());
    return 1;
  }

  if (app.got_subcommand("solve")) return dispatch("solve", solve_args);
  if (app.got_subcommand("evolve")) return dispatch("evolve", evolve_args);
  if (app.got_subcommand("verify")) return dispatch("verify", verify_args);
  return dispatch("testfn", testfn_args);
}
