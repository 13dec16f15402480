#include <iostream>

#include "CLI11.hpp"
#include "eatta/commands.hpp"
#include "eatta/error.hpp"

namespace {

void add_common(CLI::App* cmd, eatta::CommandOptions& o) {
  cmd->add_option_function<std::string>(
      "--config", [&o](const std::string& p) { o.config_path = p; }, "Config file");
  cmd->add_option_function<std::string>(
      "--preset", [&o](const std::string& p) { o.preset = p; }, "Built-in config by name");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; }, "Master seed (overrides [run] seed)");
  cmd->add_option_function<std::string>(
      "--out", [&o](const std::string& p) { o.out = p; }, "Output directory (overrides [run] out)");
}

void add_bind(CLI::App* cmd, eatta::CommandOptions& o) {
  cmd->add_option_function<std::string>(
      "--bind", [&o](const std::string& b) { o.bind = b; }, "[host:]port of the annotation service");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eatta: active test-time adaptation on desk-scale streams"};
  app.require_subcommand(1);
  eatta::CommandOptions o;

  auto* pretrain = app.add_subcommand("pretrain", "Train the source model and write its snapshot");
  add_common(pretrain, o);
  pretrain->add_flag("--annotator", o.annotator, "Also train the annotator model");

  auto* run = app.add_subcommand("run", "Adapt over one episode and write report.json/report.csv");
  add_common(run, o);
  add_bind(run, o);
  run->add_flag("--serve", o.serve, "Start the annotation service for the run");

  auto* ablate = app.add_subcommand("ablate", "Run the [grid] cross product and write a summary table");
  add_common(ablate, o);

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gradcheck->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; }, "Seed for the random trials");
  gradcheck->add_option("--trials", o.trials, "Number of random trials")->check(CLI::NonNegativeNumber);
  gradcheck->add_option_function<std::string>(
      "--out", [&o](const std::string& p) { o.out = p; }, "Write gradcheck.json here");
  gradcheck->add_flag("--corrupt-gradient", o.corrupt_gradient, "Test hook: perturb the analytic gradient")
      ->group("");

  auto* serve = app.add_subcommand("serve", "Run an episode with the human oracle and the annotation service");
  add_common(serve, o);
  add_bind(serve, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : eatta::kExitConfig;
  }

  try {
    if (*pretrain) return eatta::cmd_pretrain(o, std::cout, std::cerr);
    if (*run) return eatta::cmd_run(o, std::cout, std::cerr);
    if (*ablate) return eatta::cmd_ablate(o, std::cout, std::cerr);
    if (*gradcheck) return eatta::cmd_gradcheck(o, std::cout, std::cerr);
    if (*serve) return eatta::cmd_serve(o, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return eatta::exit_code_for(e);
  }
  return eatta::kExitConfig;
}
