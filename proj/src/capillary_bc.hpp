#pragma once

#include <span>
#include <vector>

#include "graph_geometry.hpp"
#include "linalg.hpp"
#include "star_mesh.hpp"

namespace coneflow {

/// Future-directed unit normal of the cone boundary over the boundary point z
/// with outward planar normal N; <mu, mu> = sign(1 - (N.z)^2).
Vec3 cone_normal(const Vec2& z, const Vec2& N, double min_margin = 1e-12);

/// b(xi, p) = (p.N - (N.xi)(1 + xi.p)) / (sqrt|(N.xi)^2 - 1| sqrt(margin)) + alpha.
double b_residual(const Vec2& xi, const Vec2& N, const Vec2& p, double alpha);
/// d b / d p.
Vec2 b_gradient(const Vec2& xi, const Vec2& N, const Vec2& p);
/// N . db/dp in closed form.
double obliqueness(const Vec2& xi, const Vec2& N, const Vec2& p, double alpha);

/// Positive factor relating the second fundamental form of the cone boundary
/// to the position vector; equals 1/R on round cones.
double q_factor(const Vec2& z, const Vec2& zdot, const Vec2& N, double kappa);

/// h^Sigma(nu^Sigma, nu^Sigma) / |nu^Sigma|^2 at a boundary point with graph
/// value u and support function S.
double hat_h_nn(double S, double u, const Vec2& z, const Vec2& zdot, const Vec2& N, double kappa,
                double alpha);

/// h^Sigma(Z, nu^Sigma) for Z tangent to the cone boundary and orthogonal to
/// nu^Sigma.
double hat_h_z_nusigma(const Vec3& Z, double S, const Vec3& x, double q, int sigma);

struct BoundaryPoint {
  int node = 0;
  int sigma = 0;
  double alpha = 0;  // -<nu, mu> at the current state
  Vec3 mu, mu_top, nu_sigma, gamma, e3_proj, x_proj;
  double mu_top_norm2 = 0, nu_sigma_norm2 = 0;
  double xnorm = 0;  // sqrt |<x, x>|
  double q = 0;
  double hat_h_nn = 0;
  double hat_h_e3 = 0;  // h^Sigma(e3^{M cap Sigma}, nu^Sigma)
};

std::vector<BoundaryPoint> boundary_frame(const StarMesh& mesh, const GeomFrame& frame);

struct BoundaryOptions {
  double tol = 1e-10;
  int max_newton = 50;
  int max_bisect = 200;
  int max_sweeps = 200;
  int threads = 1;
};

struct BoundaryReport {
  double max_residual = 0;
  double min_obliqueness = 0;
  int iterations = 0;
};

/// sup over boundary nodes of |b(xi, D rho)|.
double boundary_residual_sup(const StarMesh& mesh, std::span<const double> field, double alpha);

/// Solves b(xi, D field) = 0 for the boundary ring values of `field`.
BoundaryReport enforce_boundary(const StarMesh& mesh, std::vector<double>& field, double alpha,
                                const BoundaryOptions& opts = {});

}  // namespace coneflow
