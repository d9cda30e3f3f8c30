#include "expander.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "capillary_bc.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace coneflow {

namespace {

using OdeState = std::array<double, 2>;  // (rho, rho')

double radial_b(double R, double alpha, double y) {
  return b_residual(Vec2(R, 0.0), Vec2(1.0, 0.0), Vec2(y, 0.0), alpha);
}

double radial_margin(double r, double y) {
  const double a = 1.0 + r * y;
  return a * a - y * y;
}

// rho'' from H = S/2 for rho = P(varrho).
double second_derivative(double r, double rho, double y) {
  return y * y + radial_margin(r, y) * (0.5 * std::exp(2.0 * rho) - y / r);
}

struct BlowUp {};

struct Shot {
  bool blew_up = false;
  std::vector<double> rho, slope;
};

Shot shoot(double R, double f0, int grid, double tol, bool keep) {
  const double rho0 = std::log(f0);
  const double k = 0.25 * f0 * f0;
  const double r0 = 1e-4 * R;
  OdeState x{rho0 + 0.5 * k * r0 * r0, k * r0};
  long evaluations = 0;
  auto rhs = [&evaluations](const OdeState& s, OdeState& ds, double r) {
    if (!(radial_margin(r, s[1]) > 0.0) || !std::isfinite(s[1]) || std::abs(s[1]) > 1e6 || s[0] > 30.0 ||
        ++evaluations > 200000) {
      throw BlowUp{};
    }
    ds[0] = s[1];
    ds[1] = second_derivative(r, s[0], s[1]);
  };
  std::vector<double> times;
  times.push_back(r0);
  for (int i = 1; i < grid; ++i) times.push_back(R * double(i) / double(grid - 1));
  Shot shot;
  if (keep) {
    shot.rho.push_back(rho0);
    shot.slope.push_back(0.0);
  }
  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_controlled(tol * 1e-2, tol * 1e-2, odeint::runge_kutta_dopri5<OdeState>());
  try {
    odeint::integrate_times(stepper, rhs, x, times.begin(), times.end(), R / double(grid - 1),
                            [&](const OdeState& s, double r) {
                              if (keep && r > r0) {
                                shot.rho.push_back(s[0]);
                                shot.slope.push_back(s[1]);
                              }
                            });
  } catch (const BlowUp&) {
    shot.blew_up = true;
  }
  if (!shot.blew_up && !keep) {
    shot.rho.push_back(x[0]);
    shot.slope.push_back(x[1]);
  }
  return shot;
}

}  // namespace

bool radial_boundary_slope(double R, double alpha, double& y) {
  require(R > 0.0 && R != 1.0, "radial_boundary_slope: R must be positive and not 1");
  const double lo = -1.0 / (1.0 + R);
  double hi = R < 1.0 ? 1.0 / (1.0 - R) : std::numeric_limits<double>::infinity();
  auto f = [&](double t) { return radial_b(R, alpha, t); };
  const double width = std::isfinite(hi) ? hi - lo : 1.0;
  double a = lo + 1e-12 * width;
  double b = std::isfinite(hi) ? hi - 1e-12 * width : 1.0;
  if (!std::isfinite(hi)) {
    while (f(b) < 0.0 && b < 1e12) b *= 2.0;
  }
  const double fa = f(a), fb = f(b);
  if ((fa > 0) == (fb > 0)) return false;
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb,
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
  y = 0.5 * (r.first + r.second);
  return true;
}

double RadialProfile::rho_at(double r) const {
  const std::size_t n = varrho.size();
  const double h = varrho[1] - varrho[0];
  if (r >= varrho.back()) return rho.back() + slope.back() * (r - varrho.back());
  const std::size_t i = std::min(n - 2, std::size_t(std::max(0.0, r) / h));
  const double t = (r - varrho[i]) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * rho[i] + h10 * h * slope[i] + h01 * rho[i + 1] + h11 * h * slope[i + 1];
}

double RadialProfile::slope_at(double r) const {
  const std::size_t n = varrho.size();
  const double h = varrho[1] - varrho[0];
  if (r >= varrho.back()) return slope.back();
  const std::size_t i = std::min(n - 2, std::size_t(std::max(0.0, r) / h));
  const double t = (r - varrho[i]) / h;
  const double d00 = 6 * t * t - 6 * t, d10 = 3 * t * t - 4 * t + 1;
  const double d01 = -6 * t * t + 6 * t, d11 = 3 * t * t - 2 * t;
  return (d00 * rho[i] + d01 * rho[i + 1]) / h + d10 * slope[i] + d11 * slope[i + 1];
}

RadialProfile radial_expander_ode(double R, double alpha, const OdeOptions& opts) {
  require(R > 0.0 && R != 1.0, "radial_expander_ode: R must be positive and not 1");
  require(opts.grid >= 16, "radial_expander_ode: grid too small");
  const int sigma = R < 1.0 ? 1 : -1;
  if (sigma < 0 && !(alpha > 1.0)) {
    fail(ErrorCode::ObliquenessLoss, "Riemannian cone boundary requires alpha > 1");
  }
  auto mismatch = [&](double f0) {
    const Shot s = shoot(R, f0, 64, opts.tol, false);
    if (s.blew_up) return std::numeric_limits<double>::infinity();
    return radial_b(R, alpha, s.slope.back());
  };

  const int scan = 240;
  const double lf_min = std::log(opts.f0_min), lf_max = std::log(opts.f0_max);
  double prev_l = lf_min, prev_b = mismatch(opts.f0_min);
  bool found = false;
  double lo = 0, hi = 0;
  for (int i = 1; i <= scan && !found; ++i) {
    const double l = lf_min + (lf_max - lf_min) * double(i) / scan;
    const double b = mismatch(std::exp(l));
    if (prev_b < 0.0 && b >= 0.0) {
      lo = prev_l;
      hi = l;
      found = true;
    }
    prev_l = l;
    prev_b = b;
  }
  if (!found) {
    fail(ErrorCode::Existence, "no radial expander: b(R) does not change sign for u(0) in [" +
                                   format_double(opts.f0_min) + ", " + format_double(opts.f0_max) +
                                   "] (alpha = " + format_double(alpha) + ", R = " + format_double(R) + ")");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mismatch(std::exp(mid)) < 0.0) lo = mid; else hi = mid;
  }
  const double f0 = std::exp(0.5 * (lo + hi));
  const Shot s = shoot(R, f0, opts.grid, opts.tol, true);
  if (s.blew_up) fail(ErrorCode::Existence, "radial expander shot blew up at the matched apex value");

  RadialProfile p;
  p.R = R;
  p.alpha = alpha;
  p.sigma = sigma;
  p.f0 = f0;
  p.rho = s.rho;
  p.slope = s.slope;
  for (int i = 0; i < opts.grid; ++i) p.varrho.push_back(R * double(i) / double(opts.grid - 1));
  p.bc_residual = std::abs(radial_b(R, alpha, p.slope.back()));
  for (int i = 1; i < opts.grid; ++i) {
    const double r = p.varrho[i], y = p.slope[i];
    const Vec2 e(1.0, 0.0);
    Mat2 d2 = (y / r) * Mat2::Identity();
    d2(0, 0) = second_derivative(r, p.rho[i], y);
    const PointGeom g = point_geometry(r * e, p.rho[i], y * e, d2);
    p.ode_residual = std::max(p.ode_residual, std::abs(g.H - 0.5 * g.S) / std::max(1.0, g.S));
  }
  return p;
}

double expander_residual(const StarMesh& mesh, std::span<const double> rho_tilde, int threads) {
  const GeomFrame f = compute_frame(mesh, rho_tilde, 0.0, threads);
  double worst = 0.0;
  for (int k : mesh.interior_nodes()) {
    const PointGeom& p = f.nodes[k];
    worst = std::max(worst, std::abs(p.H - 0.5 * p.S) / std::max(1.0, p.S));
  }
  return worst;
}

double angular_asymmetry(const StarMesh& mesh, std::span<const double> field) {
  double worst = 0.0;
  for (int i = 1; i < mesh.nr(); ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int j = 0; j < mesh.ns(); ++j) {
      lo = std::min(lo, field[mesh.index(i, j)]);
      hi = std::max(hi, field[mesh.index(i, j)]);
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

OracleComparison compare_oracle(const StarMesh& mesh, std::span<const double> rho_tilde,
                                const RadialProfile& profile) {
  require(rho_tilde.size() == mesh.size(), "compare_oracle: field size does not match mesh");
  OracleComparison c;
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    c.sup_difference = std::max(c.sup_difference, std::abs(rho_tilde[k] - profile.rho_at(mesh.node(int(k)).norm())));
  }
  c.asymmetry = angular_asymmetry(mesh, rho_tilde);
  return c;
}

ExpanderProfile relax_to_expander(const StarMesh& mesh, const ExpanderConfig& cfg, GraphField initial,
                                  const StepObserver& observe) {
  FlowConfig flow = cfg.flow;
  flow.mode = FlowMode::Rescaled;
  flow.tau_end = cfg.tau_max;
  flow.stop_when_stationary = true;
  const RunResult r = run_flow(mesh, flow, std::move(initial), observe);
  ExpanderProfile p;
  p.rho_tilde = r.final_state.rho_tilde;
  p.tau = r.final_state.tau;
  p.steps = r.final_state.step_count;
  p.termination = r.termination;
  p.failure = r.failure;
  p.stationarity = r.final_stationarity;
  if (r.termination != Termination::StepFailure) {
    p.residual_sup = expander_residual(mesh, p.rho_tilde, flow.threads);
    p.bc_residual_sup = boundary_residual_sup(mesh, p.rho_tilde, flow.alpha);
  }
  p.converged = r.termination == Termination::Stationary && p.residual_sup < cfg.expander_tol &&
                p.bc_residual_sup < flow.bc_tol;
  return p;
}

}  // namespace coneflow
