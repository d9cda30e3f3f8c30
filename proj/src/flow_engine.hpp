#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include "capillary_bc.hpp"
#include "graph_geometry.hpp"
#include "star_mesh.hpp"

namespace coneflow {

enum class FlowMode { Physical, Rescaled };
enum class Scheme { ExplicitRK2, IMEX };

struct FlowConfig {
  double alpha = 0.0;
  FlowMode mode = FlowMode::Rescaled;
  double tau_end = 1.0;
  double cfl = 0.4;
  Scheme scheme = Scheme::IMEX;
  double bc_tol = 1e-10;
  double stat_tol = 1e-7;
  bool stop_when_stationary = true;
  long max_steps = 10000000;
  int threads = 1;
};

/// Checks the config invariants against the cone signature.
void check_flow_config(const FlowConfig& cfg, int sigma);

struct GraphField {
  std::vector<double> rho_tilde;
  double tau = 0.0;
  long step_count = 0;
};

/// e^{-2w} a^{ij}(D_ij w - D_i w D_j w) + c at interior nodes, zero on the
/// boundary ring. With w = rho_tilde and c = -1/2 this is rho_tilde_tau;
/// with w = rho and c = 0 it is rho_t.
std::vector<double> flow_rhs(const StarMesh& mesh, std::span<const double> w, double c, int threads = 1);

std::vector<double> rhs_rescaled(const StarMesh& mesh, std::span<const double> rho_tilde, int threads = 1);
std::vector<double> rhs_physical(const StarMesh& mesh, std::span<const double> rho, int threads = 1);

/// Sup over interior nodes of |rho_tilde_tau| for the state.
double stationarity(const StarMesh& mesh, const GraphField& state, int threads = 1);

struct StepInfo {
  double dtau = 0;     // rescaled time advanced
  double dvar = 0;     // step in the integration variable (t or tau)
  double lambda_max = 0;
  BoundaryReport boundary;
};

/// Advances the state by one step; throws StepFailure if the new state is
/// not admissible.
class Stepper {
 public:
  Stepper(const StarMesh& mesh, FlowConfig cfg);

  /// Step size in the integration variable that the stability rule allows.
  double allowed_step(const GraphField& state) const;
  StepInfo step(GraphField& state, std::optional<double> dvar = std::nullopt);

  const FlowConfig& config() const { return cfg_; }

 private:
  std::vector<double> integration_field(const GraphField& s) const;
  void store(GraphField& s, const std::vector<double>& w, double new_var) const;
  double variable(const GraphField& s) const;
  double source() const { return cfg_.mode == FlowMode::Rescaled ? -0.5 : 0.0; }
  void heun(std::vector<double>& w, double dt, BoundaryReport& rep) const;
  void backward_euler(std::vector<double>& w, double dt);
  void imex(std::vector<double>& w, double dt, BoundaryReport& rep);
  void check_admissible(std::span<const double> rho_tilde, double tau) const;

  const StarMesh& mesh_;
  FlowConfig cfg_;
  BoundaryOptions bopts_;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> solver_;
  bool analyzed_ = false;
};

enum class Termination { Stationary, TauEnd, StepFailure, MaxSteps };
const char* to_string(Termination t);

struct RunResult {
  Termination termination = Termination::TauEnd;
  GraphField final_state;
  double final_stationarity = 0;
  std::string failure;
};

/// Observer sees every accepted state, including the initial one.
using StepObserver = std::function<void(const GraphField&, const StepInfo&)>;

RunResult run_flow(const StarMesh& mesh, const FlowConfig& cfg, GraphField initial,
                   const StepObserver& observe = {});

// ---------------------------------------------------------------------------
// Initial data

enum class InitFamily { PerturbedExpander, RadialProfile, Hyperboloid, Constant, File };

struct InitParams {
  InitFamily family = InitFamily::PerturbedExpander;
  double epsilon = 0.0;
  double asymmetry = 0.0;
  double amplitude = 2.0;  // A, also the hyperboloid c
  std::string file;
};

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double value = 0;  // worst value of the checked quantity
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool ok() const;
  std::string first_failure() const;
};

/// Spacelike, S > 0, H > 0 everywhere and |b| < bc_tol on the boundary.
ValidationReport validate_state(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                double alpha, double bc_tol, int threads = 1);

/// Bump vanishing to second order on the boundary (zero value and gradient).
double bump(const ConeDomain& domain, const Vec2& xi);
double asymmetric_bump(const ConeDomain& domain, const Vec2& xi);

struct InitialData {
  GraphField field;
  ValidationReport report;
};

InitialData make_initial_data(const StarMesh& mesh, const InitParams& params, double alpha,
                              double bc_tol, int threads = 1);

}  // namespace coneflow
