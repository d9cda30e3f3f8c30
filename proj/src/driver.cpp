#include "driver.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "io.hpp"

namespace coneflow {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return kExitConfig;
    case ErrorCode::Data:
      return kExitData;
    case ErrorCode::NonConvergence:
    case ErrorCode::Existence:
      return kExitNonConvergence;
    default:
      return kExitRejected;
  }
}

namespace {

class Keys {
 public:
  Keys(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return kv_.count(key) != 0;
  }
  const std::string& text(const std::string& key) {
    if (!has(key)) fail(ErrorCode::Config, "missing config key: " + key);
    return kv_.at(key);
  }
  double number(const std::string& key) {
    const std::string& s = text(key);
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !std::isfinite(x)) fail(ErrorCode::Config, "bad number for " + key + ": " + s);
    return x;
  }
  long integer(const std::string& key) {
    const std::string& s = text(key);
    std::size_t used = 0;
    long x = 0;
    try {
      x = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) fail(ErrorCode::Config, "bad integer for " + key + ": " + s);
    return x;
  }
  bool flag(const std::string& key) {
    const std::string& s = text(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(ErrorCode::Config, "bad boolean for " + key + ": " + s);
  }
  void reject_unknown() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.count(k)) fail(ErrorCode::Config, "unknown config key: " + k);
    }
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::set<std::string> used_;
};

const std::map<std::string, InitFamily> kFamilies{
    {"perturbed-expander", InitFamily::PerturbedExpander},
    {"radial-profile", InitFamily::RadialProfile},
    {"hyperboloid", InitFamily::Hyperboloid},
    {"constant", InitFamily::Constant},
    {"file", InitFamily::File},
};

std::string family_name(InitFamily f) {
  for (const auto& [name, value] : kFamilies) {
    if (value == f) return name;
  }
  return "?";
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() ? p : fs::absolute(base / p).lexically_normal();
}

}  // namespace

RunConfig load_run_config(const std::map<std::string, std::string>& kv, const fs::path& base) {
  Keys keys(kv);
  RunConfig c;
  c.domain_type = keys.text("domain.type");
  if (c.domain_type == "round") {
    c.R = keys.number("domain.R");
  } else if (c.domain_type == "profile") {
    c.profile_file = resolve(keys.text("domain.profile_file"), base);
  } else {
    fail(ErrorCode::Config, "domain.type must be round or profile, got " + c.domain_type);
  }
  if (keys.has("domain.samples")) c.domain_samples = int(keys.integer("domain.samples"));
  if (keys.has("domain.degeneracy")) c.degeneracy = keys.number("domain.degeneracy");
  c.nr = int(keys.integer("mesh.nr"));
  c.ns = int(keys.integer("mesh.ns"));

  FlowConfig& f = c.flow;
  f.alpha = keys.number("flow.alpha");
  if (keys.has("flow.mode")) {
    const std::string& m = keys.text("flow.mode");
    if (m == "physical") {
      f.mode = FlowMode::Physical;
    } else if (m != "rescaled") {
      fail(ErrorCode::Config, "flow.mode must be physical or rescaled, got " + m);
    }
  }
  if (keys.has("flow.tau_end") && keys.has("flow.t_end")) {
    fail(ErrorCode::Config, "flow.tau_end and flow.t_end are exclusive");
  }
  if (keys.has("flow.tau_end")) {
    f.tau_end = keys.number("flow.tau_end");
    c.has_tau_end = true;
  } else if (keys.has("flow.t_end")) {
    f.tau_end = std::log1p(keys.number("flow.t_end"));
    c.has_tau_end = true;
  }
  if (c.has_tau_end && !(f.tau_end > 0)) fail(ErrorCode::Config, "flow.tau_end must be positive");
  if (keys.has("flow.cfl")) f.cfl = keys.number("flow.cfl");
  if (!(f.cfl > 0)) fail(ErrorCode::Config, "flow.cfl must be positive");
  if (keys.has("flow.scheme")) {
    const std::string& s = keys.text("flow.scheme");
    if (s == "explicit-rk2") {
      f.scheme = Scheme::ExplicitRK2;
    } else if (s == "imex") {
      f.scheme = Scheme::IMEX;
    } else {
      fail(ErrorCode::Config, "flow.scheme must be explicit-rk2 or imex, got " + s);
    }
  }
  if (keys.has("flow.bc_tol")) f.bc_tol = keys.number("flow.bc_tol");
  if (keys.has("flow.stat_tol")) f.stat_tol = keys.number("flow.stat_tol");
  f.stop_when_stationary = f.mode == FlowMode::Rescaled;
  if (keys.has("flow.stop_when_stationary")) f.stop_when_stationary = keys.flag("flow.stop_when_stationary");
  if (keys.has("flow.max_steps")) f.max_steps = keys.integer("flow.max_steps");

  const std::string& fam = keys.text("init.family");
  if (!kFamilies.count(fam)) fail(ErrorCode::Config, "unknown init.family: " + fam);
  c.init.family = kFamilies.at(fam);
  if (keys.has("init.epsilon")) c.init.epsilon = keys.number("init.epsilon");
  if (keys.has("init.asymmetry")) c.init.asymmetry = keys.number("init.asymmetry");
  if (keys.has("init.amplitude")) c.init.amplitude = keys.number("init.amplitude");
  if (c.init.family == InitFamily::File) c.init.file = resolve(keys.text("init.file"), base).string();

  if (keys.has("output.dir")) c.output_dir = keys.text("output.dir");
  if (keys.has("output.snapshot_every")) c.snapshot_every = keys.integer("output.snapshot_every");
  if (c.snapshot_every < 0) fail(ErrorCode::Config, "output.snapshot_every must be non-negative");
  if (keys.has("expander.tol")) c.expander_tol = keys.number("expander.tol");
  if (keys.has("expander.tau_max")) c.tau_max = keys.number("expander.tau_max");
  keys.reject_unknown();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig c = load_run_config(parse_config_file(path), path.parent_path());
  if (const char* dir = std::getenv("CONEFLOW_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
  return c;
}

std::string render_run_config(const RunConfig& c) {
  std::ostringstream s;
  auto put = [&](const std::string& k, const std::string& v) { s << k << " = " << v << '\n'; };
  auto num = [&](const std::string& k, double v) { put(k, format_double(v)); };
  put("domain.type", c.domain_type);
  if (c.domain_type == "round") {
    num("domain.R", c.R);
  } else {
    put("domain.profile_file", c.profile_file.string());
  }
  put("domain.samples", std::to_string(c.domain_samples));
  num("domain.degeneracy", c.degeneracy);
  put("mesh.nr", std::to_string(c.nr));
  put("mesh.ns", std::to_string(c.ns));
  num("flow.alpha", c.flow.alpha);
  put("flow.mode", c.flow.mode == FlowMode::Physical ? "physical" : "rescaled");
  if (c.has_tau_end) num("flow.tau_end", c.flow.tau_end);
  num("flow.cfl", c.flow.cfl);
  put("flow.scheme", c.flow.scheme == Scheme::IMEX ? "imex" : "explicit-rk2");
  num("flow.bc_tol", c.flow.bc_tol);
  num("flow.stat_tol", c.flow.stat_tol);
  put("flow.stop_when_stationary", c.flow.stop_when_stationary ? "true" : "false");
  put("flow.max_steps", std::to_string(c.flow.max_steps));
  put("init.family", family_name(c.init.family));
  num("init.epsilon", c.init.epsilon);
  num("init.asymmetry", c.init.asymmetry);
  num("init.amplitude", c.init.amplitude);
  if (c.init.family == InitFamily::File) put("init.file", c.init.file);
  put("output.dir", fs::absolute(c.output_dir).lexically_normal().string());
  put("output.snapshot_every", std::to_string(c.snapshot_every));
  num("expander.tol", c.expander_tol);
  num("expander.tau_max", c.tau_max);
  return s.str();
}

ConeDomain build_domain(const RunConfig& c) {
  DomainOptions opts;
  opts.degeneracy_threshold = c.degeneracy;
  if (c.domain_type == "round") return ConeDomain::round(c.R, std::size_t(c.domain_samples), opts);
  return ConeDomain::from_profile_file(c.profile_file, std::size_t(c.domain_samples), opts);
}

double nominal_dtau(const Stepper& stepper, const GraphField& state) {
  const double d = stepper.allowed_step(state);
  if (stepper.config().mode == FlowMode::Rescaled) return d;
  return std::log1p(d / (1.0 + std::expm1(state.tau)));
}

fs::path snapshot_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snap_%08ld.txt", step);
  return buf;
}

namespace {

struct BitInfo {
  VerdictBit bit;
  const char* name;
};

constexpr std::array<BitInfo, 9> kBits{{
    {kMeanConvexity, "mean_convexity"},
    {kGraphicality, "graphicality"},
    {kSpeedLower, "speed_lower"},
    {kSpeedUpper, "speed_upper"},
    {kRhoBand, "rho_band"},
    {kXnormBand, "xnorm_band"},
    {kSpacelikeBound, "spacelike_bound"},
    {kGraphicalityRatio, "graphicality_ratio"},
    {kBoundaryCondition, "boundary_condition"},
}};

bool bit_applies(VerdictBit bit, const MonitorConstants& k) {
  switch (bit) {
    case kGraphicality:
    case kBoundaryCondition:
      return true;
    case kSpacelikeBound:
    case kGraphicalityRatio:
      return k.sigma < 0;
    default:
      return k.applicable;
  }
}

// Everything a run writes next to its monitors.
struct Session {
  RunConfig cfg;
  const StarMesh& mesh;
  fs::path dir;
  Stepper nominal;
  MonitorConstants k;
  std::ofstream csv;
  std::vector<MonitorRecord> records;
  std::vector<fs::path> files;
  long last_snapshot = -1;
  GraphField last;

  Session(const RunConfig& c, const StarMesh& m, const FlowConfig& flow)
      : cfg(c), mesh(m), dir(c.output_dir), nominal(m, flow) {
    cfg.flow = flow;
    fs::create_directories(dir / "snapshots");
    std::ofstream rc(dir / "run.cfg");
    rc << render_run_config(cfg);
    if (!rc) fail(ErrorCode::Data, "cannot write " + (dir / "run.cfg").string());
    files.push_back(dir / "run.cfg");
    csv.open(dir / "monitors.csv");
    if (!csv) fail(ErrorCode::Data, "cannot write " + (dir / "monitors.csv").string());
    write_monitor_header(csv);
    files.push_back(dir / "monitors.csv");
  }

  void snapshot(const GraphField& s) {
    const fs::path p = dir / "snapshots" / snapshot_name(s.step_count);
    write_snapshot(p, make_snapshot(mesh, s.rho_tilde, s.tau));
    files.push_back(p);
    last_snapshot = s.step_count;
  }

  void observe(const GraphField& s, int threads) {
    if (records.empty()) k = freeze_constants(mesh, s.rho_tilde, s.tau, cfg.flow.alpha, threads);
    const MonitorRecord r = evaluate_monitors(mesh, s.rho_tilde, s.tau, k, nominal_dtau(nominal, s), threads);
    write_monitor_row(csv, r);
    records.push_back(r);
    if (s.step_count == 0 || (cfg.snapshot_every > 0 && s.step_count % cfg.snapshot_every == 0)) snapshot(s);
    last = s;
  }

  void finish() {
    if (!records.empty() && last_snapshot != last.step_count) snapshot(last);
    csv.flush();
  }

  // Writes the verdict table; returns the number of hard failures.
  long verdicts(std::ostream& s) const {
    long hard = 0;
    for (const BitInfo& b : kBits) {
      long pass = 0, bad = 0, na = 0;
      for (const MonitorRecord& r : records) {
        if (!bit_applies(b.bit, k)) {
          ++na;
        } else if (r.verdict & b.bit) {
          ++bad;
        } else {
          ++pass;
        }
      }
      hard += bad;
      s << "verdict." << b.name << " = " << pass << " pass, " << bad << " fail, " << na << " n/a\n";
    }
    if (k.sigma > 0 && !records.empty()) {
      const SeriesCount c = support_ratio_check(records);
      hard += c.fail;
      s << "verdict.support_ratio = " << c.pass << " pass, " << c.fail << " fail, 0 n/a\n";
    } else {
      s << "verdict.support_ratio = 0 pass, 0 fail, " << records.size() << " n/a\n";
    }
    const DecayFit fit = phi_decay_fit(records, records.empty() ? 1.0 : records.front().tau + 1.0,
                                       10.0 * cfg.flow.stat_tol);
    s << "decay.points = " << fit.points << '\n';
    s << "decay.slope = " << format_double(fit.slope) << '\n';
    s << "decay.in_range = " << (fit.passed ? "true" : "false") << '\n';
    return hard;
  }
};

void write_summary(const fs::path& dir, std::vector<fs::path>& files, const std::string& body) {
  const fs::path p = dir / "summary.txt";
  files.push_back(p);
  std::ofstream out(p);
  out << body;
  out << "files =";
  for (const fs::path& f : files) out << ' ' << f.string();
  out << '\n';
  if (!out) fail(ErrorCode::Data, "cannot write " + p.string());
}

struct Prepared {
  RunConfig cfg;
  ConeDomain domain;
  StarMesh mesh;
  InitialData init;
};

Prepared prepare(const fs::path& config, int threads) {
  RunConfig cfg = load_run_config(config);
  if (threads > 0) cfg.flow.threads = threads;
  ConeDomain domain = build_domain(cfg);
  check_flow_config(cfg.flow, domain.sigma());
  StarMesh mesh(domain, cfg.nr, cfg.ns);
  InitialData init = make_initial_data(mesh, cfg.init, cfg.flow.alpha, cfg.flow.bc_tol, cfg.flow.threads);
  return {std::move(cfg), std::move(domain), std::move(mesh), std::move(init)};
}

void print_report(std::ostream& out, const ValidationReport& rep) {
  for (const ValidationCheck& c : rep.checks) {
    out << "  " << c.name << ": " << (c.passed ? "ok" : "FAIL") << " (" << format_double(c.value) << ")";
    if (!c.detail.empty()) out << ' ' << c.detail;
    out << '\n';
  }
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace

int cmd_validate(const fs::path& config, int threads, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Prepared p = prepare(config, threads);
    out << "sigma = " << p.domain.sigma() << '\n';
    print_report(out, p.init.report);
    if (!p.init.report.ok()) {
      err << "initial data rejected: " << p.init.report.first_failure() << '\n';
      return int(kExitRejected);
    }
    out << "initial data accepted\n";
    return int(kExitOk);
  });
}

int cmd_simulate(const fs::path& config, int threads, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Prepared p = prepare(config, threads);
    if (!p.init.report.ok()) {
      print_report(err, p.init.report);
      err << "initial data rejected: " << p.init.report.first_failure() << '\n';
      return int(kExitRejected);
    }
    if (!p.cfg.has_tau_end) fail(ErrorCode::Config, "missing config key: flow.tau_end");
    const FlowConfig& flow = p.cfg.flow;
    Session session(p.cfg, p.mesh, flow);
    const RunResult res = run_flow(p.mesh, flow, p.init.field, [&](const GraphField& s, const StepInfo&) {
      session.observe(s, flow.threads);
    });
    session.finish();

    std::ostringstream sum;
    const GraphField& fin = res.final_state;
    sum << "command = simulate\n";
    sum << "termination = " << to_string(res.termination) << '\n';
    if (!res.failure.empty()) sum << "failure = " << res.failure << '\n';
    sum << "sigma = " << p.domain.sigma() << '\n';
    sum << "steps = " << fin.step_count << '\n';
    sum << "final_tau = " << format_double(fin.tau) << '\n';
    sum << "final_t = " << format_double(std::expm1(fin.tau)) << '\n';
    sum << "stationarity = " << format_double(res.final_stationarity) << '\n';
    sum << "bc_residual_sup = " << format_double(boundary_residual_sup(p.mesh, fin.rho_tilde, flow.alpha)) << '\n';
    const long hard = session.verdicts(sum);
    sum << "hard_failures = " << hard << '\n';
    write_summary(session.dir, session.files, sum.str());
    out << sum.str();

    if (res.termination == Termination::StepFailure) {
      err << "step failure: " << res.failure << '\n';
      return int(kExitRejected);
    }
    if (hard > 0) {
      err << "monitor hard failures: " << hard << '\n';
      return int(kExitRejected);
    }
    if (res.termination == Termination::MaxSteps) return int(kExitNonConvergence);
    return int(kExitOk);
  });
}

int cmd_expander(const fs::path& config, int threads, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Prepared p = prepare(config, threads);
    if (!p.init.report.ok()) {
      print_report(err, p.init.report);
      err << "initial data rejected: " << p.init.report.first_failure() << '\n';
      return int(kExitRejected);
    }
    ExpanderConfig ec;
    ec.flow = p.cfg.flow;
    ec.flow.mode = FlowMode::Rescaled;
    ec.expander_tol = p.cfg.expander_tol;
    ec.tau_max = p.cfg.tau_max;
    Session session(p.cfg, p.mesh, ec.flow);
    const ExpanderProfile prof = relax_to_expander(p.mesh, ec, p.init.field, [&](const GraphField& s, const StepInfo&) {
      session.observe(s, ec.flow.threads);
    });
    session.finish();
    const fs::path profile_path = session.dir / "expander.txt";
    write_snapshot(profile_path, make_snapshot(p.mesh, prof.rho_tilde, prof.tau));
    session.files.push_back(profile_path);

    std::ostringstream sum;
    sum << "command = expander\n";
    sum << "termination = " << to_string(prof.termination) << '\n';
    if (!prof.failure.empty()) sum << "failure = " << prof.failure << '\n';
    sum << "alpha = " << format_double(ec.flow.alpha) << '\n';
    sum << "sigma = " << p.domain.sigma() << '\n';
    if (const auto R = p.domain.round_radius()) {
      sum << "R = " << format_double(*R) << '\n';
    } else {
      sum << "profile = " << p.cfg.profile_file.string() << '\n';
    }
    sum << "steps = " << prof.steps << '\n';
    sum << "final_tau = " << format_double(prof.tau) << '\n';
    sum << "stationarity = " << format_double(prof.stationarity) << '\n';
    sum << "residual_sup = " << format_double(prof.residual_sup) << '\n';
    sum << "bc_residual_sup = " << format_double(prof.bc_residual_sup) << '\n';
    sum << "converged = " << (prof.converged ? "true" : "false") << '\n';
    if (const auto R = p.domain.round_radius(); R && prof.termination != Termination::StepFailure) {
      try {
        const RadialProfile ode = radial_expander_ode(*R, ec.flow.alpha);
        const OracleComparison cmp = compare_oracle(p.mesh, prof.rho_tilde, ode);
        sum << "oracle.f0 = " << format_double(ode.f0) << '\n';
        sum << "oracle.sup_difference = " << format_double(cmp.sup_difference) << '\n';
        sum << "oracle.asymmetry = " << format_double(cmp.asymmetry) << '\n';
      } catch (const Error& e) {
        sum << "oracle.failure = " << e.what() << '\n';
      }
    }
    const long hard = session.verdicts(sum);
    sum << "hard_failures = " << hard << '\n';
    write_summary(session.dir, session.files, sum.str());
    out << sum.str();

    if (prof.termination == Termination::StepFailure) {
      err << "step failure: " << prof.failure << '\n';
      return int(kExitRejected);
    }
    if (!prof.converged) {
      err << "expander did not converge by tau = " << format_double(prof.tau)
          << ": residual " << format_double(prof.residual_sup) << '\n';
      return int(kExitNonConvergence);
    }
    return int(kExitOk);
  });
}

int cmd_diagnose(const fs::path& snapshot, int threads, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir = fs::absolute(snapshot).parent_path().parent_path();
    const fs::path cfg_path = dir / "run.cfg";
    if (!fs::exists(cfg_path)) fail(ErrorCode::Data, "no run.cfg next to " + snapshot.string());
    RunConfig cfg = load_run_config(parse_config_file(cfg_path), dir);
    if (threads > 0) cfg.flow.threads = threads;
    const ConeDomain domain = build_domain(cfg);
    const StarMesh mesh(domain, cfg.nr, cfg.ns);
    const Snapshot snap = read_snapshot(snapshot);
    const std::vector<double> field = snapshot_field(mesh, snap);
    const Snapshot first = read_snapshot(dir / "snapshots" / snapshot_name(0));
    const std::vector<double> field0 = snapshot_field(mesh, first);

    const FlowConfig& flow = cfg.flow;
    const Stepper nominal(mesh, flow);
    const MonitorConstants k = freeze_constants(mesh, field0, first.tau, flow.alpha, flow.threads);
    GraphField state{field, snap.tau, 0};
    const MonitorRecord r = evaluate_monitors(mesh, field, snap.tau, k, nominal_dtau(nominal, state), flow.threads);
    write_monitor_header(out);
    write_monitor_row(out, r);
    return int(kExitOk);
  });
}

}  // namespace coneflow
