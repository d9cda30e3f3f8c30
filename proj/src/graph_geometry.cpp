#include "graph_geometry.hpp"

#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "parallel.hpp"

namespace coneflow {

namespace {

[[noreturn]] void not_spacelike(const Vec2& xi, double margin) {
  std::ostringstream os;
  os << "surface is not spacelike at xi = (" << xi.x() << ", " << xi.y()
     << "): margin " << margin;
  fail(ErrorCode::NotSpacelike, os.str());
}

}  // namespace

double spacelike_margin(const Vec2& xi, const Vec2& drho) {
  const double a = 1.0 + xi.dot(drho);
  return a * a - drho.squaredNorm();
}

Mat2 induced_metric(double u, const Vec2& du, const Vec2& xi) {
  require(u > 0.0, "induced_metric: u must be positive");
  const Mat2 g = u * u * Mat2::Identity() + u * (xi * du.transpose() + du * xi.transpose()) +
                 (xi.squaredNorm() - 1.0) * du * du.transpose();
  if (!(g(0, 0) > 0.0 && g.determinant() > 0.0)) {
    not_spacelike(xi, spacelike_margin(xi, du / u));
  }
  return g;
}

Mat2 scaled_inverse_metric(const Vec2& xi, const Vec2& drho) {
  const double m = spacelike_margin(xi, drho);
  if (!(m > 0.0)) not_spacelike(xi, m);
  const double a = 1.0 + drho.dot(xi);
  const Mat2 num = drho * drho.transpose() + drho.squaredNorm() * xi * xi.transpose() -
                   a * (xi * drho.transpose() + drho * xi.transpose());
  return Mat2::Identity() + num / m;
}

Mat2 inverse_metric(double rho, const Vec2& drho, const Vec2& xi) {
  return std::exp(-2.0 * rho) * scaled_inverse_metric(xi, drho);
}

NormalData unit_normal(double u, const Vec2& du, const Vec2& xi) {
  require(u > 0.0, "unit_normal: u must be positive");
  const double a = u + xi.dot(du);
  const double w2 = a * a - du.squaredNorm();
  if (!(w2 > 0.0)) not_spacelike(xi, w2 / (u * u));
  const double w = std::sqrt(w2);
  NormalData out;
  out.nu = Vec3(du.x(), du.y(), a) / w;
  out.v = a / w;
  out.S = u * u / w;
  return out;
}

Mat2 second_fundamental(const Vec2& du, const Mat2& d2u, const Vec2& xi, const Vec3& nu) {
  const Vec3 radial = lift(xi, 1.0);
  Mat2 h;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Vec3 dij = d2u(i, j) * radial;
      dij[j] += du[i];
      dij[i] += du[j];
      h(i, j) = -mink(dij, nu);
    }
  }
  return h;
}

PointGeom point_geometry(const Vec2& xi, double rho, const Vec2& drho, const Mat2& d2rho) {
  PointGeom p;
  p.xi = xi;
  p.rho = rho;
  p.drho = drho;
  p.d2rho = d2rho;
  p.margin = spacelike_margin(xi, drho);
  if (!(p.margin > 0.0)) not_spacelike(xi, p.margin);
  p.u = std::exp(rho);
  const Vec2 du = p.u * drho;
  const Mat2 d2u = p.u * (d2rho + drho * drho.transpose());
  p.g = induced_metric(p.u, du, xi);
  p.ginv = inverse_metric(rho, drho, xi);
  const NormalData n = unit_normal(p.u, du, xi);
  p.nu = n.nu;
  p.v = n.v;
  p.S = n.S;
  p.x = p.u * lift(xi, 1.0);
  const double s2 = std::sqrt(p.margin);
  const Mat2 q = d2rho - drho * drho.transpose();
  p.H = p.u * (p.ginv.cwiseProduct(q)).sum() / s2;
  p.h = second_fundamental(du, d2u, xi, p.nu);
  const Mat2 w = p.ginv * p.h;
  p.normA2 = (w * w).trace();
  return p;
}

double GeomFrame::t() const { return std::expm1(tau); }

double GeomFrame::H_tilde(std::size_t k) const { return std::exp(0.5 * tau) * nodes[k].H; }

double GeomFrame::S_tilde(std::size_t k) const { return std::exp(-0.5 * tau) * nodes[k].S; }

GeomFrame compute_frame(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                        int threads) {
  require(rho_tilde.size() == mesh.size(), "compute_frame: field size does not match mesh");
  GeomFrame f;
  f.tau = tau;
  f.nodes.resize(mesh.size());
  parallel_for(mesh.size(), threads, [&](std::size_t k) {
    f.nodes[k] = point_geometry(mesh.node(int(k)), rho_tilde[k] + 0.5 * tau,
                                mesh.grad(rho_tilde, int(k)), mesh.hess(rho_tilde, int(k)));
  });
  return f;
}

}  // namespace coneflow
