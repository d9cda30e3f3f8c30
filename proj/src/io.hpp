#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "star_mesh.hpp"

namespace coneflow {

/// %.17g
std::string format_double(double x);

struct Snapshot {
  int nr = 0, ns = 0;
  double tau = 0;
  std::vector<double> r, s;
  std::vector<double> values;  // nr * ns, ring-major; ring 0 repeats the centre
};

Snapshot make_snapshot(const StarMesh& mesh, std::span<const double> field, double tau);
void write_snapshot(const std::filesystem::path& path, const Snapshot& snap);
/// Throws Data on any parse error.
Snapshot read_snapshot(const std::filesystem::path& path);
/// Node field on `mesh`; throws Data if the snapshot grid does not match.
std::vector<double> snapshot_field(const StarMesh& mesh, const Snapshot& snap);

/// "key = value" lines; '#' starts a comment. Throws Config on malformed lines
/// or duplicate keys.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin);
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

}  // namespace coneflow
