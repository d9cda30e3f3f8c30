#include "coneflow/coneflow.h"

#include <cstring>
#include <iostream>
#include <optional>
#include <string>

#include "driver.hpp"
#include "errors.hpp"
#include "graph_geometry.hpp"

struct cf_domain {
  coneflow::ConeDomain value;
};
struct cf_mesh {
  std::unique_ptr<coneflow::ConeDomain> domain;
  std::unique_ptr<coneflow::StarMesh> value;
};
struct cf_field {
  coneflow::GraphField value;
};

namespace {

thread_local std::string last_error;

cf_status status_of(coneflow::ErrorCode code) { return cf_status(int(code) + 1); }

template <class Fn>
cf_status guard(Fn&& fn) {
  try {
    last_error.clear();
    fn();
    return CF_OK;
  } catch (const coneflow::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return CF_INTERNAL;
  }
}

cf_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return CF_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* cf_last_error(void) { return last_error.c_str(); }

const char* cf_status_name(cf_status status) {
  if (status == CF_OK) return "ok";
  if (status == CF_INTERNAL || status < CF_OK || status > CF_INTERNAL) return "internal";
  return coneflow::to_string(coneflow::ErrorCode(int(status) - 1));
}

cf_status cf_domain_round(double radius, size_t n, cf_domain** out) {
  if (!out) return null_argument("out");
  return guard([&] { *out = new cf_domain{coneflow::ConeDomain::round(radius, n)}; });
}

cf_status cf_domain_from_file(const char* path, size_t n, cf_domain** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guard([&] { *out = new cf_domain{coneflow::ConeDomain::from_profile_file(path, n)}; });
}

void cf_domain_free(cf_domain* domain) { delete domain; }

int cf_domain_signature(const cf_domain* domain) { return domain ? domain->value.sigma() : 0; }

cf_status cf_mesh_create(const cf_domain* domain, int nr, int ns, cf_mesh** out) {
  if (!domain) return null_argument("domain");
  if (!out) return null_argument("out");
  return guard([&] {
    auto m = std::make_unique<cf_mesh>();
    m->domain = std::make_unique<coneflow::ConeDomain>(domain->value);
    m->value = std::make_unique<coneflow::StarMesh>(*m->domain, nr, ns);
    *out = m.release();
  });
}

void cf_mesh_free(cf_mesh* mesh) { delete mesh; }

size_t cf_mesh_size(const cf_mesh* mesh) { return mesh ? mesh->value->size() : 0; }

double cf_mesh_spacing(const cf_mesh* mesh) { return mesh ? mesh->value->spacing() : 0.0; }

cf_status cf_mesh_nodes(const cf_mesh* mesh, double* xy, size_t len) {
  if (!mesh) return null_argument("mesh");
  if (!xy) return null_argument("xy");
  return guard([&] {
    coneflow::require(len >= 2 * mesh->value->size(), "cf_mesh_nodes: buffer too small");
    for (std::size_t k = 0; k < mesh->value->size(); ++k) {
      xy[2 * k] = mesh->value->node(int(k)).x();
      xy[2 * k + 1] = mesh->value->node(int(k)).y();
    }
  });
}

cf_status cf_field_initial(const cf_mesh* mesh, const char* family, double alpha, double epsilon,
                           double amplitude, cf_field** out) {
  if (!mesh) return null_argument("mesh");
  if (!family) return null_argument("family");
  if (!out) return null_argument("out");
  return guard([&] {
    using coneflow::InitFamily;
    coneflow::InitParams p;
    const std::string f = family;
    if (f == "perturbed-expander") {
      p.family = InitFamily::PerturbedExpander;
    } else if (f == "radial-profile") {
      p.family = InitFamily::RadialProfile;
    } else if (f == "hyperboloid") {
      p.family = InitFamily::Hyperboloid;
    } else if (f == "constant") {
      p.family = InitFamily::Constant;
    } else {
      coneflow::fail(coneflow::ErrorCode::Config, "unknown initial family: " + f);
    }
    p.epsilon = epsilon;
    p.amplitude = amplitude;
    coneflow::check_flow_config(coneflow::FlowConfig{.alpha = alpha}, mesh->value->domain().sigma());
    coneflow::InitialData d = coneflow::make_initial_data(*mesh->value, p, alpha, 1e-10);
    *out = new cf_field{std::move(d.field)};
  });
}

void cf_field_free(cf_field* field) { delete field; }

double cf_field_tau(const cf_field* field) { return field ? field->value.tau : 0.0; }

cf_status cf_field_values(const cf_field* field, double* values, size_t len) {
  if (!field) return null_argument("field");
  if (!values) return null_argument("values");
  return guard([&] {
    coneflow::require(len >= field->value.rho_tilde.size(), "cf_field_values: buffer too small");
    std::memcpy(values, field->value.rho_tilde.data(), field->value.rho_tilde.size() * sizeof(double));
  });
}

cf_status cf_field_geometry(const cf_mesh* mesh, const cf_field* field, double* H, double* S, double* v) {
  if (!mesh) return null_argument("mesh");
  if (!field) return null_argument("field");
  return guard([&] {
    const coneflow::GeomFrame frame = coneflow::compute_frame(*mesh->value, field->value.rho_tilde, field->value.tau);
    for (std::size_t k = 0; k < frame.nodes.size(); ++k) {
      if (H) H[k] = frame.nodes[k].H;
      if (S) S[k] = frame.nodes[k].S;
      if (v) v[k] = frame.nodes[k].v;
    }
  });
}

cf_status cf_field_evolve(const cf_mesh* mesh, cf_field* field, double alpha, double tau_end, int threads) {
  if (!mesh) return null_argument("mesh");
  if (!field) return null_argument("field");
  return guard([&] {
    coneflow::FlowConfig cfg;
    cfg.alpha = alpha;
    cfg.tau_end = tau_end;
    cfg.threads = threads > 0 ? threads : 1;
    coneflow::check_flow_config(cfg, mesh->value->domain().sigma());
    coneflow::RunResult r = coneflow::run_flow(*mesh->value, cfg, field->value);
    if (r.termination == coneflow::Termination::StepFailure) {
      coneflow::fail(coneflow::ErrorCode::StepFailure, r.failure);
    }
    field->value = std::move(r.final_state);
  });
}

int cf_cmd_simulate(const char* config_path, int threads) {
  if (!config_path) return coneflow::kExitConfig;
  return coneflow::cmd_simulate(config_path, threads, std::cout, std::cerr);
}

int cf_cmd_expander(const char* config_path, int threads) {
  if (!config_path) return coneflow::kExitConfig;
  return coneflow::cmd_expander(config_path, threads, std::cout, std::cerr);
}

int cf_cmd_validate(const char* config_path, int threads) {
  if (!config_path) return coneflow::kExitConfig;
  return coneflow::cmd_validate(config_path, threads, std::cout, std::cerr);
}

int cf_cmd_diagnose(const char* snapshot_path, int threads) {
  if (!snapshot_path) return coneflow::kExitData;
  return coneflow::cmd_diagnose(snapshot_path, threads, std::cout, std::cerr);
}

}  // extern "C"
