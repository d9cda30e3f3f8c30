#include "flow_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "errors.hpp"
#include "expander.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace coneflow {

void check_flow_config(const FlowConfig& cfg, int sigma) {
  require(cfg.tau_end > 0.0, "flow.tau_end must be positive");
  require(cfg.cfl > 0.0, "flow.cfl must be positive");
  require(cfg.bc_tol > 0.0 && cfg.stat_tol > 0.0, "tolerances must be positive");
  if (sigma < 0 && !(cfg.alpha > 1.0)) {
    fail(ErrorCode::ObliquenessLoss, "Riemannian cone boundary requires alpha > 1 (got " +
                                         format_double(cfg.alpha) + ")");
  }
}

namespace {

struct Coefficients {
  Vec2 dw;
  Mat2 d2w;
  Mat2 K;  // e^{-2w} a^{ij}
};

Coefficients coefficients(const StarMesh& mesh, std::span<const double> w, int k) {
  Coefficients c;
  c.dw = mesh.grad(w, k);
  c.d2w = mesh.hess(w, k);
  c.K = std::exp(-2.0 * w[k]) * scaled_inverse_metric(mesh.node(k), c.dw);
  return c;
}

double max_eigenvalue(const Mat2& m) {
  const double tr = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return tr + std::sqrt(std::max(0.0, tr * tr - det));
}

[[noreturn]] void step_failure(const GraphField& s, const std::string& why) {
  std::ostringstream os;
  os << "step " << s.step_count + 1 << " from tau = " << format_double(s.tau) << ": " << why;
  fail(ErrorCode::StepFailure, os.str());
}

}  // namespace

std::vector<double> flow_rhs(const StarMesh& mesh, std::span<const double> w, double c, int threads) {
  require(w.size() == mesh.size(), "flow_rhs: field size does not match mesh");
  std::vector<double> out(mesh.size(), 0.0);
  const auto& interior = mesh.interior_nodes();
  parallel_for(interior.size(), threads, [&](std::size_t q) {
    const int k = interior[q];
    const Coefficients co = coefficients(mesh, w, k);
    out[k] = co.K.cwiseProduct(co.d2w - co.dw * co.dw.transpose()).sum() + c;
  });
  return out;
}

std::vector<double> rhs_rescaled(const StarMesh& mesh, std::span<const double> rho_tilde, int threads) {
  return flow_rhs(mesh, rho_tilde, -0.5, threads);
}

std::vector<double> rhs_physical(const StarMesh& mesh, std::span<const double> rho, int threads) {
  return flow_rhs(mesh, rho, 0.0, threads);
}

double stationarity(const StarMesh& mesh, const GraphField& state, int threads) {
  const auto r = rhs_rescaled(mesh, state.rho_tilde, threads);
  double worst = 0.0;
  for (int k : mesh.interior_nodes()) worst = std::max(worst, std::abs(r[k]));
  return worst;
}

// ---------------------------------------------------------------------------

Stepper::Stepper(const StarMesh& mesh, FlowConfig cfg) : mesh_(mesh), cfg_(cfg) {
  bopts_.tol = cfg_.bc_tol;
  bopts_.threads = cfg_.threads;
}

double Stepper::variable(const GraphField& s) const {
  return cfg_.mode == FlowMode::Physical ? std::expm1(s.tau) : s.tau;
}

std::vector<double> Stepper::integration_field(const GraphField& s) const {
  std::vector<double> w = s.rho_tilde;
  if (cfg_.mode == FlowMode::Physical) {
    for (double& x : w) x += 0.5 * s.tau;
  }
  return w;
}

void Stepper::store(GraphField& s, const std::vector<double>& w, double new_var) const {
  s.tau = cfg_.mode == FlowMode::Physical ? std::log1p(new_var) : new_var;
  s.rho_tilde = w;
  if (cfg_.mode == FlowMode::Physical) {
    for (double& x : s.rho_tilde) x -= 0.5 * s.tau;
  }
}

double Stepper::allowed_step(const GraphField& state) const {
  const std::vector<double> w = integration_field(state);
  const auto& interior = mesh_.interior_nodes();
  std::vector<double> lam(interior.size());
  parallel_for(interior.size(), cfg_.threads, [&](std::size_t q) {
    lam[q] = max_eigenvalue(coefficients(mesh_, w, interior[q]).K);
  });
  const double lmax = *std::max_element(lam.begin(), lam.end());
  if (cfg_.scheme == Scheme::ExplicitRK2) {
    const double h = mesh_.min_spacing();
    return cfg_.cfl * h * h / (2.0 * lmax);
  }
  return cfg_.cfl * mesh_.spacing() / lmax;
}

void Stepper::heun(std::vector<double>& w, double dt, BoundaryReport& rep) const {
  const double c = source();
  const std::vector<double> k1 = flow_rhs(mesh_, w, c, cfg_.threads);
  std::vector<double> w1(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) w1[i] = w[i] + dt * k1[i];
  enforce_boundary(mesh_, w1, cfg_.alpha, bopts_);
  const std::vector<double> k2 = flow_rhs(mesh_, w1, c, cfg_.threads);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.5 * dt * (k1[i] + k2[i]);
  rep = enforce_boundary(mesh_, w, cfg_.alpha, bopts_);
}

void Stepper::backward_euler(std::vector<double>& w, double dt) {
  const std::size_t n = mesh_.size();
  const double c = source();
  const BoundaryCurve& curve = mesh_.domain().curve();
  std::vector<std::vector<Eigen::Triplet<double>>> rows(n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(n));

  const auto& interior = mesh_.interior_nodes();
  parallel_for(interior.size(), cfg_.threads, [&](std::size_t q) {
    const int k = interior[q];
    const Coefficients co = coefficients(mesh_, w, k);
    const Stencil& st = mesh_.stencil(k);
    auto& row = rows[k];
    row.reserve(st.nodes.size() + 1);
    row.emplace_back(k, k, 1.0);
    for (std::size_t p = 0; p < st.nodes.size(); ++p) {
      const double lw = co.K(0, 0) * st.dxx[p] + 2.0 * co.K(0, 1) * st.dxy[p] + co.K(1, 1) * st.dyy[p];
      row.emplace_back(k, st.nodes[p], -dt * lw);
    }
    rhs[k] = w[k] + dt * (c - co.K.cwiseProduct(co.dw * co.dw.transpose()).sum());
  });
  const auto& ring = mesh_.boundary_nodes();
  parallel_for(ring.size(), cfg_.threads, [&](std::size_t j) {
    const int k = ring[j];
    const Vec2 p = mesh_.grad(w, k);
    const Vec2& xi = mesh_.node(k);
    const Vec2 db = b_gradient(xi, curve.normal[j], p);
    const Stencil& st = mesh_.stencil(k);
    auto& row = rows[k];
    for (std::size_t q = 0; q < st.nodes.size(); ++q) {
      row.emplace_back(k, st.nodes[q], db.x() * st.dx[q] + db.y() * st.dy[q]);
    }
    rhs[k] = db.dot(p) - b_residual(xi, curve.normal[j], p, cfg_.alpha);
  });

  // Rows are scaled to unit diagonal for the preconditioner.
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t k = 0; k < n; ++k) {
    double diag = 0.0;
    for (const auto& t : rows[k]) {
      if (t.col() == int(k)) diag += t.value();
    }
    const double scale = 1.0 / diag;
    rhs[Eigen::Index(k)] *= scale;
    for (const auto& t : rows[k]) trips.emplace_back(t.row(), t.col(), t.value() * scale);
  }
  Eigen::SparseMatrix<double> a{Eigen::Index(n), Eigen::Index(n)};
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  if (!analyzed_) {
    solver_.analyzePattern(a);
    analyzed_ = true;
  }
  solver_.factorize(a);
  if (solver_.info() != Eigen::Success) fail(ErrorCode::StepFailure, "implicit system is singular");
  const Eigen::VectorXd sol = solver_.solve(rhs);
  for (std::size_t i = 0; i < n; ++i) w[i] = sol[Eigen::Index(i)];
}

// Richardson extrapolation of two half steps against one full step.
void Stepper::imex(std::vector<double>& w, double dt, BoundaryReport& rep) {
  std::vector<double> full = w;
  backward_euler(full, dt);
  backward_euler(w, 0.5 * dt);
  backward_euler(w, 0.5 * dt);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.0 * w[i] - full[i];
  rep = enforce_boundary(mesh_, w, cfg_.alpha, bopts_);
}

void Stepper::check_admissible(std::span<const double> rho_tilde, double tau) const {
  for (std::size_t k = 0; k < rho_tilde.size(); ++k) {
    if (!std::isfinite(rho_tilde[k])) {
      std::ostringstream os;
      os << "non-finite value at node " << k << " (ring " << mesh_.ring_of(int(k)) << ")";
      fail(ErrorCode::StepFailure, os.str());
    }
  }
  const GeomFrame f = compute_frame(mesh_, rho_tilde, tau, cfg_.threads);
  for (std::size_t k = 0; k < f.nodes.size(); ++k) {
    if (!(f.nodes[k].S > 0.0)) {
      std::ostringstream os;
      os << "support function lost positivity at node " << k << ": S = " << f.nodes[k].S;
      fail(ErrorCode::NonGraphical, os.str());
    }
  }
}

StepInfo Stepper::step(GraphField& state, std::optional<double> dvar) {
  StepInfo info;
  try {
    const double dt = dvar ? *dvar : allowed_step(state);
    std::vector<double> w = integration_field(state);
    if (cfg_.scheme == Scheme::ExplicitRK2) {
      heun(w, dt, info.boundary);
    } else {
      imex(w, dt, info.boundary);
    }
    GraphField next = state;
    store(next, w, variable(state) + dt);
    check_admissible(next.rho_tilde, next.tau);
    next.step_count = state.step_count + 1;
    info.dvar = dt;
    info.dtau = next.tau - state.tau;
    state = std::move(next);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::NotSpacelike:
      case ErrorCode::NonGraphical:
      case ErrorCode::BoundarySolve:
      case ErrorCode::StepFailure:
        step_failure(state, e.what());
      default:
        throw;
    }
  }
  return info;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Stationary: return "stationary";
    case Termination::TauEnd: return "tau_end";
    case Termination::StepFailure: return "step-failure";
    case Termination::MaxSteps: return "max-steps";
  }
  return "unknown";
}

RunResult run_flow(const StarMesh& mesh, const FlowConfig& cfg, GraphField initial,
                   const StepObserver& observe) {
  check_flow_config(cfg, mesh.domain().sigma());
  Stepper stepper(mesh, cfg);
  RunResult res;
  GraphField state = std::move(initial);
  const double var_end = cfg.mode == FlowMode::Physical ? std::expm1(cfg.tau_end) : cfg.tau_end;
  auto variable = [&](const GraphField& s) {
    return cfg.mode == FlowMode::Physical ? std::expm1(s.tau) : s.tau;
  };
  if (observe) observe(state, StepInfo{});
  long steps = 0;
  while (true) {
    res.final_stationarity = stationarity(mesh, state, cfg.threads);
    if (cfg.stop_when_stationary && res.final_stationarity < cfg.stat_tol) {
      res.termination = Termination::Stationary;
      break;
    }
    const double remaining = var_end - variable(state);
    if (remaining <= 1e-12 * std::max(1.0, std::abs(var_end))) {
      res.termination = Termination::TauEnd;
      break;
    }
    if (steps >= cfg.max_steps) {
      res.termination = Termination::MaxSteps;
      break;
    }
    try {
      double dt = stepper.allowed_step(state);
      // Avoid a sliver of a final step.
      if (remaining - dt < 0.25 * dt) dt = remaining;
      const StepInfo info = stepper.step(state, dt);
      ++steps;
      if (observe) observe(state, info);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::StepFailure) throw;
      res.termination = Termination::StepFailure;
      res.failure = e.what();
      break;
    }
  }
  res.final_state = std::move(state);
  return res;
}

// ---------------------------------------------------------------------------

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
}

std::string ValidationReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return c.name + " fails" + (c.detail.empty() ? "" : " (" + c.detail + ")");
  }
  return {};
}

ValidationReport validate_state(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                double alpha, double bc_tol, int threads) {
  ValidationReport rep;
  const std::size_t n = mesh.size();
  std::vector<double> margin(n), S(n), H(n);
  std::vector<char> spacelike(n, 1);
  parallel_for(n, threads, [&](std::size_t k) {
    const Vec2 p = mesh.grad(rho_tilde, int(k));
    margin[k] = spacelike_margin(mesh.node(int(k)), p);
    if (!(margin[k] > 0.0)) {
      spacelike[k] = 0;
      return;
    }
    const PointGeom g = point_geometry(mesh.node(int(k)), rho_tilde[k] + 0.5 * tau, p,
                                       mesh.hess(rho_tilde, int(k)));
    S[k] = g.S;
    H[k] = g.H;
  });
  auto argmin = [&](const std::vector<double>& v) {
    return std::size_t(std::min_element(v.begin(), v.end()) - v.begin());
  };
  auto where = [&](std::size_t k) {
    std::ostringstream os;
    os << "node " << k << " at xi = (" << mesh.node(int(k)).x() << ", " << mesh.node(int(k)).y() << ")";
    return os.str();
  };

  const std::size_t km = argmin(margin);
  const bool all_spacelike = margin[km] > 0.0;
  rep.checks.push_back({"spacelike", all_spacelike, margin[km],
                        all_spacelike ? "" : "margin " + format_double(margin[km]) + " at " + where(km)});
  if (all_spacelike) {
    const std::size_t ks = argmin(S), kh = argmin(H);
    rep.checks.push_back({"S>0", S[ks] > 0.0, S[ks], S[ks] > 0.0 ? "" : "min S at " + where(ks)});
    rep.checks.push_back({"H>0", H[kh] > 0.0, H[kh],
                          H[kh] > 0.0 ? "" : "min H = " + format_double(H[kh]) + " at " + where(kh)});
    const double bres = boundary_residual_sup(mesh, rho_tilde, alpha);
    rep.checks.push_back({"b=0", bres < bc_tol, bres, bres < bc_tol ? "" : "|b| = " + format_double(bres)});
  } else {
    rep.checks.push_back({"S>0", false, 0.0, "not evaluated: surface not spacelike"});
    rep.checks.push_back({"H>0", false, 0.0, "not evaluated: surface not spacelike"});
    rep.checks.push_back({"b=0", false, 0.0, "not evaluated: surface not spacelike"});
  }
  return rep;
}

double bump(const ConeDomain& domain, const Vec2& xi) {
  const double r = domain.gauge(xi);
  const double s = std::max(0.0, 1.0 - r * r);
  return -s * s * s;
}

double asymmetric_bump(const ConeDomain& domain, const Vec2& xi) {
  double scale = 0.0;
  for (const Vec2& z : domain.curve().z) scale = std::max(scale, z.norm());
  return bump(domain, xi) * xi.x() / scale;
}

namespace {

double effective_radius(const ConeDomain& d) {
  if (auto r = d.round_radius()) return *r;
  double sum = 0.0;
  for (double s : d.curve().support) sum += s;
  return sum / double(d.curve().size());
}

std::vector<double> hyperboloid_field(const StarMesh& mesh, double c) {
  return mesh.sample([&](const Vec2& xi) {
    const double q = 1.0 - xi.squaredNorm();
    if (!(q > 0.0)) {
      fail(ErrorCode::InvalidArgument, "hyperboloid data needs the domain inside the unit disc");
    }
    return std::log(c) - 0.5 * std::log(q);
  });
}

}  // namespace

InitialData make_initial_data(const StarMesh& mesh, const InitParams& params, double alpha,
                              double bc_tol, int threads) {
  InitialData out;
  GraphField& f = out.field;
  const ConeDomain& dom = mesh.domain();
  BoundaryOptions bopts;
  bopts.tol = bc_tol;
  bopts.threads = threads;
  bool enforce = true;

  switch (params.family) {
    case InitFamily::Hyperboloid:
      require(params.amplitude > 0.0, "init.amplitude must be positive");
      f.rho_tilde = hyperboloid_field(mesh, params.amplitude);
      break;
    case InitFamily::Constant:
      require(params.amplitude > 0.0, "init.amplitude must be positive");
      f.rho_tilde.assign(mesh.size(), std::log(params.amplitude));
      enforce = false;
      break;
    case InitFamily::PerturbedExpander: {
      double rmax = 0.0;
      for (const Vec2& z : dom.curve().z) rmax = std::max(rmax, z.norm());
      if (alpha == 0.0 && rmax < 1.0) {
        f.rho_tilde = hyperboloid_field(mesh, 2.0);
      } else if (auto R = dom.round_radius()) {
        const RadialProfile prof = radial_expander_ode(*R, alpha);
        f.rho_tilde = mesh.sample([&](const Vec2& xi) { return prof.rho_at(xi.norm()); });
      } else {
        fail(ErrorCode::Config, "perturbed-expander data needs a round cone unless alpha = 0");
      }
      for (std::size_t k = 0; k < mesh.size(); ++k) {
        f.rho_tilde[k] += params.epsilon * bump(dom, mesh.node(int(k))) +
                          params.asymmetry * asymmetric_bump(dom, mesh.node(int(k)));
      }
      break;
    }
    case InitFamily::RadialProfile: {
      require(params.amplitude > 0.0, "init.amplitude must be positive");
      const double R = effective_radius(dom);
      double yR = 0.0;
      if (!radial_boundary_slope(R, alpha, yR)) {
        fail(ErrorCode::Existence, "no radial boundary slope satisfies b = 0 for alpha = " + format_double(alpha));
      }
      const double beta = std::min(0.25 * params.amplitude * params.amplitude, yR / R);
      const double gamma = (yR - beta * R) / (R * R * R);
      const double logA = std::log(params.amplitude);
      f.rho_tilde = mesh.sample([&](const Vec2& xi) {
        const double r2 = xi.squaredNorm();
        return logA + 0.5 * beta * r2 + 0.25 * gamma * r2 * r2;
      });
      break;
    }
    case InitFamily::File: {
      const Snapshot snap = read_snapshot(params.file);
      f.rho_tilde = snapshot_field(mesh, snap);
      f.tau = snap.tau;
      enforce = false;
      break;
    }
  }
  if (enforce) enforce_boundary(mesh, f.rho_tilde, alpha, bopts);
  out.report = validate_state(mesh, f.rho_tilde, f.tau, alpha, bc_tol, threads);
  return out;
}

}  // namespace coneflow
