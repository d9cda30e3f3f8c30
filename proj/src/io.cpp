#include "io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace coneflow {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Snapshot make_snapshot(const StarMesh& mesh, std::span<const double> field, double tau) {
  require(field.size() == mesh.size(), "snapshot: field size does not match mesh");
  Snapshot s;
  s.nr = mesh.nr();
  s.ns = mesh.ns();
  s.tau = tau;
  s.r = mesh.r_values();
  s.s = mesh.s_values();
  s.values.reserve(std::size_t(s.nr) * std::size_t(s.ns));
  for (int i = 0; i < s.nr; ++i) {
    for (int j = 0; j < s.ns; ++j) s.values.push_back(field[mesh.index(i, j)]);
  }
  return s;
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Data, "cannot write snapshot " + path.string());
  out << snap.nr << ' ' << snap.ns << ' ' << format_double(snap.tau) << '\n';
  auto line = [&](const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out << (i > lo ? " " : "") << format_double(v[i]);
    out << '\n';
  };
  line(snap.r, 0, snap.r.size());
  line(snap.s, 0, snap.s.size());
  for (int i = 0; i < snap.nr; ++i) {
    line(snap.values, std::size_t(i) * snap.ns, std::size_t(i + 1) * snap.ns);
  }
  if (!out) fail(ErrorCode::Data, "failed writing snapshot " + path.string());
}

namespace {

std::vector<double> read_numbers(std::istream& in, std::size_t count, const std::string& what,
                                 const std::string& origin) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string tok;
    if (!(in >> tok)) fail(ErrorCode::Data, origin + ": truncated " + what);
    std::size_t used = 0;
    try {
      v[i] = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v[i])) {
      fail(ErrorCode::Data, origin + ": bad number '" + tok + "' in " + what);
    }
  }
  return v;
}

}  // namespace

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open snapshot " + path.string());
  const std::string origin = path.string();
  Snapshot s;
  std::string header;
  if (!std::getline(in, header)) fail(ErrorCode::Data, origin + ": empty file");
  std::istringstream hs(header);
  std::string extra;
  if (!(hs >> s.nr >> s.ns >> s.tau) || (hs >> extra) || s.nr < 2 || s.ns < 1) {
    fail(ErrorCode::Data, origin + ": malformed header '" + header + "'");
  }
  s.r = read_numbers(in, std::size_t(s.nr), "r values", origin);
  s.s = read_numbers(in, std::size_t(s.ns), "s values", origin);
  s.values = read_numbers(in, std::size_t(s.nr) * std::size_t(s.ns), "node values", origin);
  if (in >> extra) fail(ErrorCode::Data, origin + ": trailing data '" + extra + "'");
  for (int j = 1; j < s.ns; ++j) {
    if (s.values[std::size_t(j)] != s.values[0]) {
      fail(ErrorCode::Data, origin + ": centre row is not constant");
    }
  }
  return s;
}

std::vector<double> snapshot_field(const StarMesh& mesh, const Snapshot& snap) {
  if (snap.nr != mesh.nr() || snap.ns != mesh.ns()) {
    fail(ErrorCode::Data, "snapshot grid " + std::to_string(snap.nr) + "x" + std::to_string(snap.ns) +
                              " does not match mesh " + std::to_string(mesh.nr()) + "x" +
                              std::to_string(mesh.ns()));
  }
  const auto& r = mesh.r_values();
  const auto& s = mesh.s_values();
  for (int i = 0; i < snap.nr; ++i) {
    if (std::abs(snap.r[i] - r[i]) > 1e-12) fail(ErrorCode::Data, "snapshot r values do not match mesh");
  }
  for (int j = 0; j < snap.ns; ++j) {
    if (std::abs(snap.s[j] - s[j]) > 1e-9 * std::max(1.0, std::abs(s[j]))) {
      fail(ErrorCode::Data, "snapshot s values do not match mesh");
    }
  }
  std::vector<double> f(mesh.size());
  for (int i = 0; i < snap.nr; ++i) {
    for (int j = 0; j < snap.ns; ++j) f[mesh.index(i, j)] = snap.values[std::size_t(i) * snap.ns + j];
  }
  return f;
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) fail(ErrorCode::Config, where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(ErrorCode::Config, where + ": expected 'key = value'");
    if (!out.emplace(key, value).second) fail(ErrorCode::Config, where + ": duplicate key " + key);
  }
  return out;
}

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

}  // namespace coneflow
