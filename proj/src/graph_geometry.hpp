#pragma once

#include <span>
#include <vector>

#include "linalg.hpp"
#include "star_mesh.hpp"

namespace coneflow {

/// Pointwise geometry of the radial graph x = u (xi + e3), u = e^rho.
struct PointGeom {
  Vec2 xi;
  double u = 0, rho = 0;
  Vec2 drho;
  Mat2 d2rho;
  Mat2 g, ginv;
  Vec3 x, nu;
  double v = 0, S = 0, H = 0;
  Mat2 h;
  double normA2 = 0;
  double margin = 0;  // (1 + xi.Drho)^2 - |Drho|^2
};

double spacelike_margin(const Vec2& xi, const Vec2& drho);

Mat2 induced_metric(double u, const Vec2& du, const Vec2& xi);
Mat2 inverse_metric(double rho, const Vec2& drho, const Vec2& xi);

struct NormalData {
  Vec3 nu;
  double v = 0, S = 0;
};
NormalData unit_normal(double u, const Vec2& du, const Vec2& xi);

/// Everything at one point; throws NotSpacelike if the margin is not positive.
PointGeom point_geometry(const Vec2& xi, double rho, const Vec2& drho, const Mat2& d2rho);

/// h_ij = -<D_ij x, nu> assembled from u and its derivatives.
Mat2 second_fundamental(const Vec2& du, const Mat2& d2u, const Vec2& xi, const Vec3& nu);

/// Scale-free a^{ij} = e^{2 rho} g^{ij}.
Mat2 scaled_inverse_metric(const Vec2& xi, const Vec2& drho);

/// Geometry of the physical surface at every mesh node, for rescaled data
/// rho_tilde at rescaled time tau (rho = rho_tilde + tau / 2).
struct GeomFrame {
  double tau = 0;
  std::vector<PointGeom> nodes;

  double t() const;
  /// H~ = e^{tau/2} H and S~ = e^{-tau/2} S.
  double H_tilde(std::size_t k) const;
  double S_tilde(std::size_t k) const;
};

GeomFrame compute_frame(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                        int threads = 1);

}  // namespace coneflow
