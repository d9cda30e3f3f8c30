#include <string>

#include "CLI11.hpp"
#include "coneflow/coneflow.h"

int main(int argc, char** argv) {
  CLI::App app{"Mean curvature flow of capillary graphs in Minkowski cones"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string path;
  auto* simulate = app.add_subcommand("simulate", "Run the flow and write monitors");
  simulate->add_option("config", path)->required();
  auto* expander = app.add_subcommand("expander", "Relax to the expanding solution");
  expander->add_option("config", path)->required();
  auto* validate = app.add_subcommand("validate", "Check initial data");
  validate->add_option("config", path)->required();
  auto* diagnose = app.add_subcommand("diagnose", "Recompute the monitor row of a snapshot");
  diagnose->add_option("snapshot", path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  if (simulate->parsed()) return cf_cmd_simulate(path.c_str(), threads);
  if (expander->parsed()) return cf_cmd_expander(path.c_str(), threads);
  if (validate->parsed()) return cf_cmd_validate(path.c_str(), threads);
  return cf_cmd_diagnose(path.c_str(), threads);
}
