#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "capillary_bc.hpp"
#include "graph_geometry.hpp"
#include "star_mesh.hpp"

namespace coneflow {

/// Bits of MonitorRecord::verdict; a set bit is a hard violation.
enum VerdictBit : std::uint32_t {
  kMeanConvexity = 1u << 0,   // min H < -slack
  kGraphicality = 1u << 1,    // min S < -slack
  kSpeedLower = 1u << 2,      // min S/H below 2(c + t), by more than slack (1 + t)
  kSpeedUpper = 1u << 3,      // max S/H above 2(C + t), by more than slack (1 + t)
  kRhoBand = 1u << 4,         // rho~ outside its integrated band
  kXnormBand = 1u << 5,       // boundary |x|^2/(1+t) outside its band
  kSpacelikeBound = 1u << 6,  // sigma = -1: boundary v above its explicit bound
  kGraphicalityRatio = 1u << 7,  // sigma = -1: min S/(vu) below half its initial value
  kBoundaryCondition = 1u << 8,  // sup |b| >= 1e-8
  kNotApplicable = 1u << 9,      // initial data is not strictly mean convex; bands skipped
};

/// Quantities frozen on the initial slice.
struct MonitorConstants {
  int sigma = 0;
  double alpha = 0;
  double h = 0;
  double t0 = 0;  // t of the initial slice
  bool applicable = false;   // initial min H > 0
  double c_sh = 0, C_sh = 0;  // half the extremes of S/H
  double rho_min0 = 0, rho_max0 = 0;
  double zfac_min = 0, zfac_max = 0;  // extremes of ||z|^2 - 1| on the boundary
  double v_max0 = 0;
  double graphicality0 = 0;
};

struct MonitorRecord {
  double tau = 0, t = 0;
  double minH = 0, minS = 0, maxV = 0;
  double shMin = 0, shMax = 0, shLoBand = 0, shHiBand = 0;
  double rhoMin = 0, rhoMax = 0, rhoLoBand = 0, rhoHiBand = 0;
  double graphicality = 0, supportRatio = 0;
  double xnormLo = 0, xnormHi = 0, xnormLoBand = 0, xnormHiBand = 0;
  double phiSup = 0;
  double bcResidual = 0;
  double lemma33Res = 0, lemma34Res = 0;
  double vBoundExcess = 0;  // max over the boundary of v minus its explicit bound
  double slack = 0;
  std::uint32_t verdict = 0;
};

/// sqrt(2 a^2 + 2 (2 a^2 - 1) <mu, e3>^2 + 2).
double spacelike_bound(double alpha, const Vec3& mu);

MonitorConstants freeze_constants(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                  double alpha, int threads = 1);

struct BoundaryIdentities {
  double lemma33 = 0, lemma34 = 0;  // sup of scaled residuals over the ring
};
BoundaryIdentities boundary_identity_residuals(const StarMesh& mesh, const GeomFrame& frame);

/// Evaluates one slice. `dtau` is the nominal step used in the slack
/// 10 (h^2 + dtau).
MonitorRecord evaluate_monitors(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                const MonitorConstants& k, double dtau, int threads = 1);

struct DecayFit {
  double slope = 0, intercept = 0;
  int points = 0;
  bool passed = false;
};

/// Least squares fit of log phiSup against tau over tau >= tau_from and
/// phiSup >= phi_floor. Passes if the slope lies in [-1.3, -0.8].
DecayFit phi_decay_fit(std::span<const MonitorRecord> series, double tau_from = 1.0, double phi_floor = 1e-9);

struct SeriesCount {
  long pass = 0, fail = 0;
};
/// Boundedness of S/|x| on Lorentzian cones: records after the first unit of
/// tau must stay within twice the running maximum over that unit.
SeriesCount support_ratio_check(std::span<const MonitorRecord> series);

const std::vector<std::string>& monitor_columns();
void write_monitor_header(std::ostream& out);
void write_monitor_row(std::ostream& out, const MonitorRecord& r);
std::string monitor_row(const MonitorRecord& r);

}  // namespace coneflow
