#pragma once

#include <span>
#include <string>
#include <vector>

#include "flow_engine.hpp"
#include "star_mesh.hpp"

namespace coneflow {

/// Rotationally symmetric expander on the round cone of radius R, as the log
/// graph P(varrho), varrho = |xi| in [0, R]. Stored on a uniform grid with
/// slopes for cubic Hermite interpolation.
struct RadialProfile {
  double R = 0, alpha = 0;
  int sigma = 0;
  double f0 = 0;  // u at the apex
  std::vector<double> varrho, rho, slope;
  double bc_residual = 0;   // |b| at varrho = R
  double ode_residual = 0;  // sup |H~ - S~/2| / max(1, S~) on the grid

  double rho_at(double r) const;
  double slope_at(double r) const;
};

struct OdeOptions {
  double tol = 1e-10;
  int grid = 2001;
  double f0_min = 1e-2;
  double f0_max = 1e2;
};

/// Boundary slope y(R) of a radial graph that satisfies b = 0, if any.
bool radial_boundary_slope(double R, double alpha, double& y);

/// Shoots from the apex with rho' = 0 over f0 = u(0) until b = 0 at R.
/// Throws Existence if no f0 in the bracket matches.
RadialProfile radial_expander_ode(double R, double alpha, const OdeOptions& opts = {});

/// Stationary residual sup |H~ - S~/2| / max(1, S~) over interior nodes.
double expander_residual(const StarMesh& mesh, std::span<const double> rho_tilde, int threads = 1);

struct OracleComparison {
  double sup_difference = 0;
  double asymmetry = 0;  // max over rings of (max - min)
};

double angular_asymmetry(const StarMesh& mesh, std::span<const double> field);
OracleComparison compare_oracle(const StarMesh& mesh, std::span<const double> rho_tilde,
                                const RadialProfile& profile);

struct ExpanderConfig {
  FlowConfig flow;
  double expander_tol = 1e-6;
  double tau_max = 30.0;
};

struct ExpanderProfile {
  std::vector<double> rho_tilde;
  double tau = 0;
  long steps = 0;
  double residual_sup = 0;
  double bc_residual_sup = 0;
  double stationarity = 0;
  bool converged = false;
  Termination termination = Termination::TauEnd;
  std::string failure;
};

/// Runs the rescaled flow from `initial` until stationary.
ExpanderProfile relax_to_expander(const StarMesh& mesh, const ExpanderConfig& cfg, GraphField initial,
                                  const StepObserver& observe = {});

}  // namespace coneflow
