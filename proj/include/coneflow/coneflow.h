#ifndef CONEFLOW_H
#define CONEFLOW_H

#include <stddef.h>

#if defined(CONEFLOW_BUILDING_LIBRARY)
#define CONEFLOW_API __attribute__((visibility("default")))
#else
#define CONEFLOW_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_INVALID_ARGUMENT,
  CF_DEGENERATE_BOUNDARY,
  CF_NON_CONVEX,
  CF_MIXED_SIGNATURE,
  CF_MESH_QUALITY,
  CF_NOT_SPACELIKE,
  CF_NON_GRAPHICAL,
  CF_BOUNDARY_SOLVE,
  CF_OBLIQUENESS_LOSS,
  CF_STEP_FAILURE,
  CF_VALIDATION_FAILED,
  CF_NON_CONVERGENCE,
  CF_EXISTENCE,
  CF_CONFIG,
  CF_DATA,
  CF_INTERNAL
} cf_status;

typedef struct cf_domain cf_domain;
typedef struct cf_mesh cf_mesh;
typedef struct cf_field cf_field;

/* Message of the last failed call on this thread; empty if none. */
CONEFLOW_API const char* cf_last_error(void);
CONEFLOW_API const char* cf_status_name(cf_status status);

/* Round cone over the disc of radius `radius`, boundary sampled at n points. */
CONEFLOW_API cf_status cf_domain_round(double radius, size_t n, cf_domain** out);
/* "theta radius" lines describing a star-shaped convex curve. */
CONEFLOW_API cf_status cf_domain_from_file(const char* path, size_t n, cf_domain** out);
CONEFLOW_API void cf_domain_free(cf_domain* domain);
/* +1 if the cone boundary is timelike, -1 if spacelike. */
CONEFLOW_API int cf_domain_signature(const cf_domain* domain);

CONEFLOW_API cf_status cf_mesh_create(const cf_domain* domain, int nr, int ns, cf_mesh** out);
CONEFLOW_API void cf_mesh_free(cf_mesh* mesh);
CONEFLOW_API size_t cf_mesh_size(const cf_mesh* mesh);
CONEFLOW_API double cf_mesh_spacing(const cf_mesh* mesh);
/* Node coordinates, 2 * cf_mesh_size doubles. */
CONEFLOW_API cf_status cf_mesh_nodes(const cf_mesh* mesh, double* xy, size_t len);

/* family: perturbed-expander | radial-profile | hyperboloid | constant. The
   field is returned whether or not it passes validation. */
CONEFLOW_API cf_status cf_field_initial(const cf_mesh* mesh, const char* family, double alpha,
                                        double epsilon, double amplitude, cf_field** out);
CONEFLOW_API void cf_field_free(cf_field* field);
CONEFLOW_API double cf_field_tau(const cf_field* field);
CONEFLOW_API cf_status cf_field_values(const cf_field* field, double* values, size_t len);

/* Geometry at every node: H, S, v (each cf_mesh_size doubles; any may be NULL). */
CONEFLOW_API cf_status cf_field_geometry(const cf_mesh* mesh, const cf_field* field, double* H,
                                         double* S, double* v);
/* Rescaled flow of the field until tau_end or stationarity. */
CONEFLOW_API cf_status cf_field_evolve(const cf_mesh* mesh, cf_field* field, double alpha,
                                       double tau_end, int threads);

/* Command entry points; return the process exit code (0, 2, 3, 64, 65). */
CONEFLOW_API int cf_cmd_simulate(const char* config_path, int threads);
CONEFLOW_API int cf_cmd_expander(const char* config_path, int threads);
CONEFLOW_API int cf_cmd_validate(const char* config_path, int threads);
CONEFLOW_API int cf_cmd_diagnose(const char* snapshot_path, int threads);

#ifdef __cplusplus
}
#endif

#endif
