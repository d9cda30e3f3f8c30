#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "capillary_bc.hpp"
#include "driver.hpp"
#include "errors.hpp"
#include "expander.hpp"
#include "flow_engine.hpp"
#include "io.hpp"
#include "monitors.hpp"

using namespace coneflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double order(double coarse, double fine) { return std::log2(coarse / fine); }

double hyperboloid_rho(const Vec2& x, double c) { return std::log(c) - 0.5 * std::log(1.0 - x.squaredNorm()); }

InitialData initial(const StarMesh& mesh, InitFamily family, double alpha, double epsilon = 0.0) {
  InitParams p;
  p.family = family;
  p.epsilon = epsilon;
  return make_initial_data(mesh, p, alpha, 1e-10);
}

struct MonitoredRun {
  RunResult result;
  std::vector<MonitorRecord> records;
  double seconds = 0;
};

StepObserver recorder(const StarMesh& mesh, const FlowConfig& cfg, const MonitorConstants& k,
                      std::vector<MonitorRecord>& out, const StepObserver& extra = {}) {
  auto nominal = std::make_shared<Stepper>(mesh, cfg);
  return [&mesh, &cfg, &k, &out, extra, nominal](const GraphField& s, const StepInfo& info) {
    out.push_back(evaluate_monitors(mesh, s.rho_tilde, s.tau, k, nominal_dtau(*nominal, s), cfg.threads));
    if (extra) extra(s, info);
  };
}

MonitoredRun monitored_run(const StarMesh& mesh, const FlowConfig& cfg, const GraphField& start,
                           const StepObserver& extra = {}) {
  Stopwatch clock;
  MonitoredRun run;
  const MonitorConstants k = freeze_constants(mesh, start.rho_tilde, start.tau, cfg.alpha, cfg.threads);
  run.result = run_flow(mesh, cfg, start, recorder(mesh, cfg, k, run.records, extra));
  run.seconds = clock.seconds();
  return run;
}

long violations(const std::vector<MonitorRecord>& records, std::uint32_t mask) {
  return std::count_if(records.begin(), records.end(),
                       [mask](const MonitorRecord& r) { return (r.verdict & mask) != 0; });
}

// Runs shared between criteria.
struct Shared {
  MonitoredRun physical;            // criterion 2
  double axis_err = 0, field_err = 0;
  std::vector<MonitorRecord> relax;  // criterion 3
  bool physical_done = false, relax_done = false;
  MonitoredRun lorentzian;  // criteria 5 and 6
  bool lorentzian_done = false;
};

// ---------------------------------------------------------------------------

Outcome hyperboloid_exactness(Shared&) {
  Outcome o;
  Stopwatch clock;
  std::vector<double> eH, eS, ev;
  for (int n : {16, 32, 64}) {
    const StarMesh mesh(ConeDomain::round(0.5, 512), n, 2 * n);
    const std::vector<double> f = mesh.sample([](const Vec2& x) { return hyperboloid_rho(x, 2.0); });
    const GeomFrame frame = compute_frame(mesh, f, 0.0);
    double h = 0, s = 0, v = 0;
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      const PointGeom& p = frame.nodes[k];
      h = std::max(h, std::abs(p.H - 1.0));
      s = std::max(s, std::abs(p.S / 2.0 - 1.0));
      v = std::max(v, std::abs(p.v * std::sqrt(1.0 - p.xi.squaredNorm()) - 1.0));
    }
    eH.push_back(h);
    eS.push_back(s);
    ev.push_back(v);
  }
  const double secs = clock.seconds();
  const double oH = order(eH[1], eH[2]), oS = order(eS[1], eS[2]), ov = order(ev[1], ev[2]);
  o.detail << "(64,128) rel err H " << num(eH[2]) << " S " << num(eS[2]) << " v " << num(ev[2])
           << "; order H " << num(oH) << " S " << num(oS) << " v " << num(ov) << "; " << num(secs) << " s";
  o.require(std::max({eH[2], eS[2], ev[2]}) < 0.01, "sup relative error < 0.01");
  o.require(std::min({oH, oS, ov}) >= 1.9, "order >= 1.9");
  o.require(secs < 10.0, "runtime < 10 s");
  return o;
}

void run_physical(Shared& sh) {
  if (sh.physical_done) return;
  static const StarMesh mesh(ConeDomain::round(0.5, 512), 64, 128);
  InitParams p;
  p.family = InitFamily::Hyperboloid;
  p.amplitude = 2.0;
  const InitialData d = make_initial_data(mesh, p, 0.0, 1e-10);
  static FlowConfig cfg;
  cfg.mode = FlowMode::Physical;
  cfg.tau_end = std::log1p(3.0);
  cfg.stop_when_stationary = false;
  // Against u = sqrt(4 + 4t) / sqrt(1 - |xi|^2) on every accepted slice.
  auto track = [&sh](const GraphField& s, const StepInfo&) {
    const double c = std::sqrt(4.0 + 4.0 * std::expm1(s.tau));
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      const double u = std::exp(s.rho_tilde[k] + 0.5 * s.tau);
      const double e = std::abs(u * std::sqrt(1.0 - mesh.node(int(k)).squaredNorm()) / c - 1.0);
      if (k == 0) sh.axis_err = std::max(sh.axis_err, e);
      sh.field_err = std::max(sh.field_err, e);
    }
  };
  sh.physical = monitored_run(mesh, cfg, d.field, track);
  sh.physical_done = true;
}

Outcome exact_evolution(Shared& sh) {
  Outcome o;
  run_physical(sh);
  const GraphField& fin = sh.physical.result.final_state;
  const double t = std::expm1(fin.tau);
  o.detail << "t_end " << num(t) << ", " << fin.step_count << " steps; sup axis rel err " << num(sh.axis_err)
           << ", sup field rel err " << num(sh.field_err) << "; " << num(sh.physical.seconds) << " s";
  o.require(sh.physical.result.termination == Termination::TauEnd, "reached t = 3");
  o.require(std::abs(t - 3.0) < 1e-9, "t_end = 3");
  o.require(sh.axis_err < 0.02, "sup relative error < 0.02");
  o.require(sh.physical.seconds < 60.0, "runtime < 60 s");
  return o;
}

Outcome expander_convergence(Shared& sh) {
  Outcome o;
  Stopwatch clock;
  const StarMesh mesh(ConeDomain::round(0.5, 512), 32, 64);
  const double h = mesh.spacing();
  const InitialData d = initial(mesh, InitFamily::PerturbedExpander, 0.0, 0.05);
  o.require(d.report.ok(), "initial data accepted");
  ExpanderConfig cfg;
  const MonitorConstants k = freeze_constants(mesh, d.field.rho_tilde, 0.0, 0.0);
  const ExpanderProfile e = relax_to_expander(mesh, cfg, d.field, recorder(mesh, cfg.flow, k, sh.relax));
  sh.relax_done = true;
  const double secs = clock.seconds();

  double prof = 0.0;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    prof = std::max(prof, std::abs(std::expm1(e.rho_tilde[i] - hyperboloid_rho(mesh.node(int(i)), 2.0))));
  }
  const DecayFit fit = phi_decay_fit(sh.relax, 1.0, 10.0 * cfg.flow.stat_tol);
  o.detail << to_string(e.termination) << " at tau " << num(e.tau) << " (" << e.steps << " steps); residual "
           << num(e.residual_sup) << "; profile err " << num(prof) << " (5h^2 = " << num(5 * h * h)
           << "); decay slope " << num(fit.slope) << " over " << fit.points << " points; " << num(secs) << " s";
  o.require(e.termination == Termination::Stationary, "stationary");
  o.require(e.residual_sup < 1e-5, "residual < 1e-5 max(1, S~)");
  o.require(prof < 5.0 * h * h, "profile within O(h^2)");
  o.require(fit.slope >= -1.3 && fit.slope <= -0.8, "decay slope in [-1.3, -0.8]");
  o.require(secs < 120.0, "runtime < 120 s");
  return o;
}

Outcome speed_band(Shared& sh) {
  Outcome o;
  run_physical(sh);
  if (!sh.relax_done) expander_convergence(sh);
  const std::uint32_t mask = kSpeedLower | kSpeedUpper | kNotApplicable;
  const long bad2 = violations(sh.physical.records, mask);
  const long bad3 = violations(sh.relax, mask);
  o.detail << "hard violations: physical run " << bad2 << "/" << sh.physical.records.size()
           << ", rescaled run " << bad3 << "/" << sh.relax.size();
  o.require(bad2 == 0 && bad3 == 0, "zero hard violations");
  return o;
}

void run_lorentzian(Shared& sh) {
  if (sh.lorentzian_done) return;
  static const StarMesh mesh(ConeDomain::round(0.5, 512), 32, 64);
  const InitialData d = initial(mesh, InitFamily::RadialProfile, 0.0);
  static FlowConfig cfg;
  cfg.tau_end = 3.0;
  cfg.stop_when_stationary = false;
  sh.lorentzian = monitored_run(mesh, cfg, d.field);
  sh.lorentzian_done = true;
}

Outcome preserved_quantities(Shared& sh) {
  Outcome o;
  const std::uint32_t mask = kMeanConvexity | kGraphicality | kRhoBand | kXnormBand | kNotApplicable;

  const StarMesh wide(ConeDomain::round(2.0, 512), 32, 64);
  const InitialData riem = initial(wide, InitFamily::RadialProfile, 1.5);
  if (!riem.report.ok()) {
    o.detail << "Riemannian (R=2, alpha=1.5): initial data rejected: " << riem.report.first_failure();
    o.require(false, "Riemannian run");
  } else {
    FlowConfig cfg;
    cfg.alpha = 1.5;
    cfg.tau_end = 3.0;
    cfg.stop_when_stationary = false;
    const MonitoredRun run = monitored_run(wide, cfg, riem.field);
    const long bad = violations(run.records, mask);
    o.detail << "Riemannian " << bad << "/" << run.records.size() << " violating steps";
    o.require(bad == 0 && run.result.termination == Termination::TauEnd, "Riemannian run");
  }

  run_lorentzian(sh);
  const long bad = violations(sh.lorentzian.records, mask);
  o.detail << "; Lorentzian (R=0.5, alpha=0) " << bad << "/" << sh.lorentzian.records.size()
           << " violating steps to tau " << num(sh.lorentzian.result.final_state.tau);
  o.require(bad == 0 && sh.lorentzian.result.termination == Termination::TauEnd, "Lorentzian run");
  return o;
}

Outcome signature_monitors(Shared& sh) {
  Outcome o;
  const double alpha = 1.1;
  const StarMesh wide(ConeDomain::round(2.0, 512), 32, 64);
  const InitialData d = initial(wide, InitFamily::RadialProfile, alpha);
  o.require(d.report.ok(), "sigma=-1 initial data accepted");
  if (d.report.ok()) {
    FlowConfig cfg;
    cfg.alpha = alpha;
    cfg.tau_end = 3.0;
    cfg.stop_when_stationary = false;
    const MonitoredRun run = monitored_run(wide, cfg, d.field);
    const long bad = violations(run.records, kSpacelikeBound | kGraphicalityRatio);
    double excess = -INFINITY, ratio = INFINITY;
    for (const MonitorRecord& r : run.records) {
      excess = std::max(excess, r.vBoundExcess);
      ratio = std::min(ratio, r.graphicality / run.records.front().graphicality);
    }
    o.detail << "sigma=-1 (R=2, alpha=1.1): " << bad << "/" << run.records.size()
             << " violating steps, max(v - bound) " << num(excess) << ", min S/(vu) ratio " << num(ratio);
    o.require(bad == 0 && run.result.termination == Termination::TauEnd, "sigma=-1 monitors");
  }

  run_lorentzian(sh);
  const SeriesCount c = support_ratio_check(sh.lorentzian.records);
  o.detail << "; sigma=+1: " << c.fail << "/" << (c.pass + c.fail) << " late records above 2x early max";
  o.require(c.fail == 0 && c.pass > 0, "sigma=+1 support ratio");
  return o;
}

Outcome obliqueness_formula(Shared&) {
  Outcome o;
  std::mt19937 rng(20260418);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  int tested = 0;
  while (tested < 100) {
    const bool riemannian = tested % 2 == 0;
    const double R = riemannian ? 2.0 + 0.8 * U(rng) : 0.5 + 0.4 * U(rng);
    const double th = std::numbers::pi * U(rng);
    const Vec2 N(std::cos(th), std::sin(th));
    const Vec2 xi = R * N;
    const Vec2 p(1.5 * U(rng), 1.5 * U(rng));
    if (spacelike_margin(xi, p) < 0.05) continue;
    const double alpha = riemannian ? 1.05 + 0.95 * (U(rng) + 1.0) / 2.0 : 2.0 * U(rng);
    const double eps = 1e-6;
    const double fd = (b_residual(xi, N, p + eps * N, alpha) - b_residual(xi, N, p - eps * N, alpha)) / (2 * eps);
    const double an = obliqueness(xi, N, p, alpha);
    worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(an)));
    ++tested;
  }
  const double exact = obliqueness(Vec2(0.5, 0.0), Vec2(1.0, 0.0), Vec2(2.0 / 3.0, 0.0), 0.0);

  const StarMesh mesh(ConeDomain::round(0.5, 512), 32, 64);
  const InitialData d = initial(mesh, InitFamily::PerturbedExpander, 0.0);
  double discrete = 0.0;
  const auto& ring = mesh.boundary_nodes();
  for (std::size_t j = 0; j < ring.size(); ++j) {
    const double ob = obliqueness(mesh.node(ring[j]), mesh.domain().curve().normal[j],
                                  mesh.grad(d.field.rho_tilde, ring[j]), 0.0);
    discrete = std::max(discrete, std::abs(ob - 0.75));
  }
  o.detail << "100 random states, worst relative FD mismatch " << num(worst) << "; hyperboloid value "
           << num(exact) << ", discrete boundary |value - 0.75| " << num(discrete);
  o.require(worst < 1e-6, "analytic vs FD to 1e-6");
  o.require(std::abs(exact - 0.75) < 1e-12, "closed form 0.75");
  const double h = mesh.spacing();
  o.require(discrete < 5.0 * h * h, "discrete hyperboloid state");
  return o;
}

Outcome boundary_identities(Shared&) {
  Outcome o;
  std::vector<double> r33, r34;
  bool small = true;
  for (int n : {16, 32, 64}) {
    const StarMesh mesh(ConeDomain::round(0.5, 512), n, 2 * n);
    const double h = mesh.spacing();
    const std::vector<double> f = mesh.sample([](const Vec2& x) { return hyperboloid_rho(x, 2.0); });
    const BoundaryIdentities ids = boundary_identity_residuals(mesh, compute_frame(mesh, f, 0.0));
    small = small && ids.lemma33 < 5.0 * h && ids.lemma34 < 5.0 * h;
    r33.push_back(ids.lemma33);
    r34.push_back(ids.lemma34);
  }
  double flat_res = 0.0;
  for (int n : {16, 32, 64}) {
    const StarMesh wide(ConeDomain::round(2.0, 512), n, 2 * n);
    const std::vector<double> flat(wide.size(), 0.0);
    const BoundaryIdentities ids = boundary_identity_residuals(wide, compute_frame(wide, flat, 0.0));
    flat_res = std::max({flat_res, ids.lemma33, ids.lemma34});
    small = small && ids.lemma33 < 5.0 * wide.spacing() && ids.lemma34 < 5.0 * wide.spacing();
  }
  o.detail << "hyperboloid S-identity " << num(r33[0]) << " " << num(r33[1]) << " " << num(r33[2])
           << ", v-identity " << num(r34[0]) << " " << num(r34[1]) << " " << num(r34[2])
           << " (order " << num(order(r33[1], r33[2])) << ", " << num(order(r34[1], r34[2]))
           << "); constant graph " << num(flat_res);
  o.require(small, "residuals < 5h");
  o.require(order(r33[0], r33[1]) >= 1.0 && order(r33[1], r33[2]) >= 1.0 && order(r34[0], r34[1]) >= 1.0 &&
                order(r34[1], r34[2]) >= 1.0,
            "order >= 1");
  return o;
}

Outcome oracle_equivalence(Shared&) {
  Outcome o;
  const std::vector<std::pair<double, double>> cases = {{0.0, 0.5}, {0.0, 0.8}, {1.5, 2.0}, {-1.0, 0.5}};
  for (const auto& [alpha, R] : cases) {
    o.detail << (alpha == cases.front().first && R == cases.front().second ? "" : "; ") << "(" << alpha << ", "
             << R << "): ";
    RadialProfile prof;
    try {
      prof = radial_expander_ode(R, alpha);
    } catch (const Error& e) {
      o.detail << "1D: " << e.what();
      o.require(false, "(" + num(alpha) + ", " + num(R) + ") 1D oracle");
      continue;
    }
    const StarMesh mesh(ConeDomain::round(R, 512), 32, 64);
    const double h = mesh.spacing();
    const InitialData d = initial(mesh, InitFamily::RadialProfile, alpha);
    if (!d.report.ok()) {
      o.detail << "2D start rejected: " << d.report.first_failure();
      o.require(false, "(" + num(alpha) + ", " + num(R) + ") 2D start");
      continue;
    }
    ExpanderConfig cfg;
    cfg.flow.alpha = alpha;
    const ExpanderProfile e = relax_to_expander(mesh, cfg, d.field);
    const OracleComparison cmp = compare_oracle(mesh, e.rho_tilde, prof);
    o.detail << "sup diff " << num(cmp.sup_difference) << " vs 5h^2 " << num(5 * h * h) << ", asym "
             << num(cmp.asymmetry);
    o.require(e.converged && cmp.sup_difference < 5.0 * h * h,
              "(" + num(alpha) + ", " + num(R) + ") agreement");
  }
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

Outcome determinism(Shared&) {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "coneflow_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto config = [&](const std::string& name) {
    const fs::path p = root / (name + ".cfg");
    std::ofstream(p) << "domain.type = round\ndomain.R = 0.5\nmesh.nr = 16\nmesh.ns = 32\nflow.alpha = 0\n"
                        "flow.tau_end = 3\ninit.family = perturbed-expander\ninit.epsilon = 0.05\n"
                        "init.asymmetry = 0.02\noutput.snapshot_every = 4\noutput.dir = "
                     << (root / name).string() << "\n";
    return p;
  };
  std::ostringstream sink;
  const int a = cmd_simulate(config("a"), 1, sink, sink);
  const int b = cmd_simulate(config("b"), 1, sink, sink);
  o.require(a == 0 && b == 0, "simulate exit 0");

  const std::string csv = read_file(root / "a" / "monitors.csv");
  bool same = csv == read_file(root / "b" / "monitors.csv");
  int snaps = 0, rows_ok = 0;
  const std::vector<std::string> rows = split_lines(csv);
  for (const auto& entry : fs::directory_iterator(root / "a" / "snapshots")) {
    ++snaps;
    same = same && read_file(entry.path()) == read_file(root / "b" / "snapshots" / entry.path().filename());
    std::ostringstream out, err;
    if (cmd_diagnose(entry.path(), 1, out, err) != 0) continue;
    const std::vector<std::string> got = split_lines(out.str());
    const std::size_t step = std::stoul(entry.path().stem().string().substr(5));
    if (got.size() == 2 && step + 1 < rows.size() && got[0] == rows[0] && got[1] == rows[step + 1]) ++rows_ok;
  }
  o.detail << rows.size() - 1 << " rows, " << snaps << " snapshots; runs identical: " << (same ? "yes" : "no")
           << "; diagnose rows identical " << rows_ok << "/" << snaps;
  o.require(same, "bit-identical repeated runs");
  o.require(snaps > 2 && rows_ok == snaps, "diagnose reproduces rows");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome(Shared&)>>> criteria = {
      {"hyperboloid exactness", hyperboloid_exactness},
      {"exact evolution", exact_evolution},
      {"expander convergence", expander_convergence},
      {"speed band", speed_band},
      {"preserved quantities", preserved_quantities},
      {"signature monitors", signature_monitors},
      {"obliqueness formula", obliqueness_formula},
      {"boundary identity residuals", boundary_identities},
      {"oracle equivalence", oracle_equivalence},
      {"determinism and round trip", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  Shared shared;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second(shared);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2d %-28s %s  %s\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
