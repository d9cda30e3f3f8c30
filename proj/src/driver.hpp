#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "cone_domain.hpp"
#include "errors.hpp"
#include "expander.hpp"
#include "flow_engine.hpp"
#include "monitors.hpp"

namespace coneflow {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitRejected = 2,
  kExitNonConvergence = 3,
  kExitConfig = 64,
  kExitData = 65,
};

int exit_code_for(ErrorCode code);

struct RunConfig {
  std::string domain_type;  // round | profile
  double R = 0;
  std::filesystem::path profile_file;
  int domain_samples = 512;
  double degeneracy = 1e-3;
  int nr = 0, ns = 0;
  FlowConfig flow;
  bool has_tau_end = false;
  InitParams init;
  std::filesystem::path output_dir = "out";
  long snapshot_every = 0;  // 0 writes only the first and last state
  double expander_tol = 1e-6;
  double tau_max = 30.0;
};

/// Resolves a parsed key/value map. Relative file paths are taken relative
/// to `base`. Throws Config naming the offending key.
RunConfig load_run_config(const std::map<std::string, std::string>& kv, const std::filesystem::path& base);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key, fully resolved, in a form load_run_config accepts.
std::string render_run_config(const RunConfig& cfg);

ConeDomain build_domain(const RunConfig& cfg);

/// Nominal rescaled step of the stability rule at `state`.
double nominal_dtau(const Stepper& stepper, const GraphField& state);

std::filesystem::path snapshot_name(long step);

int cmd_simulate(const std::filesystem::path& config, int threads, std::ostream& out, std::ostream& err);
int cmd_expander(const std::filesystem::path& config, int threads, std::ostream& out, std::ostream& err);
int cmd_validate(const std::filesystem::path& config, int threads, std::ostream& out, std::ostream& err);
/// Recomputes the monitor record of a snapshot written by simulate or
/// expander and prints it as a monitors.csv row.
int cmd_diagnose(const std::filesystem::path& snapshot, int threads, std::ostream& out, std::ostream& err);

}  // namespace coneflow
