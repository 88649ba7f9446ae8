#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "safempc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-gated imitation learning for the cart-pole"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string format;
  std::string threads;

  const std::pair<const char*, const char*> commands[] = {
      {"collect", "run the MPC expert and write dataset.csv"},
      {"train", "fit the Bayesian network to dataset.csv"},
      {"eval", "clean swing-up test of the trained learner"},
      {"cem", "learn the switching threshold under the disturbance"},
      {"demo", "one gated rollout with a per-step log"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("-s,--set", overrides, "override, section.key=value")->allow_extra_args(false);
    sub->add_option("--format", format, "trace format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", threads, "rollout worker threads");
  }
  CLI11_PARSE(app, argc, argv);

  if (!format.empty()) overrides.push_back("format=\"" + format + "\"");
  if (!threads.empty()) overrides.push_back("threads=" + threads);
  const std::string command = app.get_subcommands().front()->get_name();
  return safempc::cli::run_command(command, config_path, overrides, std::cout, std::cerr);
}
