#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "driver.hpp"
#include "io.hpp"

using namespace coneflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("coneflow_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string expander_config(const fs::path& out, double epsilon = 0.0) {
  std::ostringstream os;
  os << "# expander start\n"
     << "domain.type = round\n"
     << "domain.R = 0.5\n"
     << "mesh.nr = 12\n"
     << "mesh.ns = 24\n"
     << "flow.alpha = 0\n"
     << "flow.mode = rescaled\n"
     << "flow.tau_end = 30\n"
     << "flow.stat_tol = 1e-6\n"
     << "init.family = perturbed-expander\n"
     << "init.epsilon = " << epsilon << "\n"
     << "output.dir = " << out.string() << "\n"
     << "output.snapshot_every = 5\n";
  return os.str();
}

struct Outcome {
  int code;
  std::string out, err;
};

template <class Fn>
Outcome run(Fn&& cmd, const fs::path& p) {
  std::ostringstream out, err;
  const int code = cmd(p, 1, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto kv = parse_config_text("a = 1\n# note\n\n b.c=two words \n", "inline");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b.c") == "two words");
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n", "inline"), Error);
  CHECK_THROWS_AS(parse_config_text("no equals sign\n", "inline"), Error);

  auto good = parse_config_text(expander_config("out"), "inline");
  const RunConfig c = load_run_config(good, ".");
  CHECK(c.R == 0.5);
  CHECK(c.flow.mode == FlowMode::Rescaled);
  CHECK(c.snapshot_every == 5);
  const RunConfig again = load_run_config(parse_config_text(render_run_config(c), "rendered"), ".");
  CHECK(render_run_config(again) == render_run_config(c));

  auto unknown = good;
  unknown["flow.speed"] = "3";
  CHECK_THROWS_AS(load_run_config(unknown, "."), Error);
  auto missing = good;
  missing.erase("mesh.nr");
  try {
    load_run_config(missing, ".");
    FAIL("missing key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).find("mesh.nr") != std::string::npos);
  }
  auto both = good;
  both["flow.t_end"] = "3";
  CHECK_THROWS_AS(load_run_config(both, "."), Error);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorCode::Config) == 64);
  CHECK(exit_code_for(ErrorCode::Data) == 65);
  CHECK(exit_code_for(ErrorCode::NonConvergence) == 3);
  CHECK(exit_code_for(ErrorCode::ObliquenessLoss) == 2);

  TempDir dir("exit");
  std::string text = expander_config(dir.path / "out");
  text.replace(text.find("mesh.nr = 12\n"), 13, "");
  const Outcome miss = run(cmd_simulate, write_text(dir.path / "missing.cfg", text));
  CHECK(miss.code == 64);
  CHECK(miss.err.find("mesh.nr") != std::string::npos);

  CHECK(run(cmd_simulate, dir.path / "absent.cfg").code == 64);

  const std::string flat =
      "domain.type = round\ndomain.R = 2\nmesh.nr = 12\nmesh.ns = 24\nflow.alpha = 1.1547005383792517\n"
      "init.family = constant\ninit.amplitude = 1\noutput.dir = " +
      (dir.path / "flat").string() + "\n";
  const Outcome rejected = run(cmd_simulate, write_text(dir.path / "flat.cfg", flat));
  CHECK(rejected.code == 2);
  CHECK(rejected.err.find("initial data rejected: H>0 fails") != std::string::npos);
}

TEST_CASE("validate") {
  TempDir dir("validate");
  CHECK(run(cmd_validate, write_text(dir.path / "ok.cfg", expander_config(dir.path / "o", 0.05))).code == 0);

  std::string oblique = expander_config(dir.path / "o");
  oblique.replace(oblique.find("domain.R = 0.5"), 14, "domain.R = 2");
  oblique.replace(oblique.find("flow.alpha = 0"), 14, "flow.alpha = 1");
  const Outcome o = run(cmd_validate, write_text(dir.path / "oblique.cfg", oblique));
  CHECK(o.code == 2);
  CHECK(o.err.find("alpha") != std::string::npos);

  std::string degenerate = expander_config(dir.path / "o");
  degenerate.replace(degenerate.find("domain.R = 0.5"), 14, "domain.R = 1");
  const Outcome d = run(cmd_validate, write_text(dir.path / "degenerate.cfg", degenerate));
  CHECK(d.code == 2);
  CHECK(d.err.find("degenerate") != std::string::npos);
}

TEST_CASE("simulate and diagnose round trip") {
  TempDir dir("roundtrip");
  const fs::path out = dir.path / "out";
  const fs::path cfg = write_text(dir.path / "run.cfg", expander_config(out, 0.05));
  const Outcome sim = run(cmd_simulate, cfg);
  REQUIRE(sim.code == 0);
  CHECK(sim.out.find("termination = stationary") != std::string::npos);

  const std::string summary = read_text(out / "summary.txt");
  for (const std::string& l : lines(summary)) {
    if (l.rfind("files =", 0) != 0) continue;
    std::istringstream in(l.substr(7));
    for (std::string f; in >> f;) CHECK(fs::exists(f));
  }

  const std::vector<std::string> rows = lines(read_text(out / "monitors.csv"));
  REQUIRE(rows.size() > 2);
  int checked = 0;
  for (const auto& entry : fs::directory_iterator(out / "snapshots")) {
    const Snapshot snap = read_snapshot(entry.path());
    const long step = std::stol(entry.path().stem().string().substr(5));
    const Outcome diag = run(cmd_diagnose, entry.path());
    REQUIRE(diag.code == 0);
    const std::vector<std::string> got = lines(diag.out);
    REQUIRE(got.size() == 2);
    CHECK(got[0] == rows[0]);
    CHECK(got[1] == rows[std::size_t(step) + 1]);
    CHECK(snap.nr == 12);
    ++checked;
  }
  CHECK(checked >= 3);

  // Same inputs, same bytes.
  const std::string first = read_text(out / "monitors.csv");
  REQUIRE(run(cmd_simulate, cfg).code == 0);
  CHECK(read_text(out / "monitors.csv") == first);

  const fs::path snap0 = out / "snapshots" / snapshot_name(0);
  const std::string body = read_text(snap0);
  write_text(snap0, body.substr(0, body.size() / 2) + "\nnot a number\n");
  CHECK(run(cmd_diagnose, snap0).code == 65);

  Snapshot other = read_snapshot(out / "snapshots" / snapshot_name(5));
  other.nr = 13;
  write_snapshot(snap0, other);
  const Outcome mismatch = run(cmd_diagnose, snap0);
  CHECK(mismatch.code == 65);
}

TEST_CASE("output directory override") {
  TempDir dir("override");
  const fs::path cfg = write_text(dir.path / "run.cfg", expander_config(dir.path / "configured"));
  ::setenv("CONEFLOW_OUTPUT_DIR", (dir.path / "env").c_str(), 1);
  const Outcome sim = run(cmd_validate, cfg);
  const RunConfig c = load_run_config(cfg);
  ::unsetenv("CONEFLOW_OUTPUT_DIR");
  CHECK(sim.code == 0);
  CHECK(c.output_dir == dir.path / "env");
}

TEST_CASE("expander command") {
  TempDir dir("expander");
  const fs::path out = dir.path / "out";
  const Outcome ok = run(cmd_expander, write_text(dir.path / "ok.cfg", expander_config(out, 0.05)));
  CHECK(ok.code == 0);
  const std::string summary = read_text(out / "summary.txt");
  CHECK(summary.find("converged = true") != std::string::npos);
  CHECK(summary.find("oracle.f0 = ") != std::string::npos);
  CHECK(summary.find("oracle.sup_difference = ") != std::string::npos);
  CHECK(fs::exists(out / "expander.txt"));

  const Outcome late = run(
      cmd_expander, write_text(dir.path / "late.cfg", expander_config(out, 0.05) + "expander.tau_max = 0.5\n"));
  CHECK(late.code == 3);
}

TEST_CASE("snapshot round trip") {
  TempDir dir("snapshot");
  const StarMesh mesh(ConeDomain::round(0.5, 512), 10, 20);
  std::vector<double> f = mesh.sample([](const Vec2& x) { return std::sin(3.0 * x.x()) + x.y() / 7.0; });
  write_snapshot(dir.path / "s.txt", make_snapshot(mesh, f, 0.1));
  const Snapshot back = read_snapshot(dir.path / "s.txt");
  CHECK(back.tau == 0.1);
  CHECK(snapshot_field(mesh, back) == f);
  const StarMesh coarse(ConeDomain::round(0.5, 512), 9, 20);
  CHECK_THROWS_AS(snapshot_field(coarse, back), Error);
}
