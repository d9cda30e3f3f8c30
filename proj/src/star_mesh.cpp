#include "star_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace coneflow {

namespace {

constexpr int kBasis = 10;        // cubic polynomials in two variables
constexpr double kRadiusFactor = 2.5;
constexpr double kQualityThreshold = 1e-6;
constexpr double kWeightDecay = 8.0;  // Gaussian weight exp(-8 |eta|^2)
// Hessians carry -gamma (f_k - fit_k) / radius^2 on the diagonal: O(h^2) on
// smooth data, dissipative on oscillations the cubic fit cannot see.
constexpr double kResidualPenalty = 1.0;

void cubic_basis(double a, double b, double* row) {
  row[0] = 1.0;
  row[1] = a;
  row[2] = b;
  row[3] = a * a;
  row[4] = a * b;
  row[5] = b * b;
  row[6] = a * a * a;
  row[7] = a * a * b;
  row[8] = a * b * b;
  row[9] = b * b * b;
}

}  // namespace

StarMesh::StarMesh(const ConeDomain& domain, int nr, int ns)
    : domain_(ns >= 16 ? domain.resampled(std::size_t(ns)) : domain), nr_(nr), ns_(ns) {
  require(nr >= 8, "build_mesh: nr must be at least 8");
  require(ns >= 16, "build_mesh: ns must be at least 16");

  const BoundaryCurve& c = domain_.curve();
  const double dr = 1.0 / double(nr - 1);
  for (int i = 0; i < nr; ++i) r_.push_back(double(i) * dr);

  const std::size_t n = 1 + std::size_t(nr - 1) * std::size_t(ns);
  nodes_.resize(n);
  jac_.resize(n);
  jac_inv_.resize(n);
  nodes_[0] = Vec2::Zero();
  jac_[0] = Mat2::Identity();
  jac_inv_[0] = Mat2::Identity();
  for (int i = 1; i < nr; ++i) {
    for (int j = 0; j < ns; ++j) {
      const int k = index(i, j);
      nodes_[k] = r_[i] * c.z[j];
      Mat2 jac;
      jac.col(0) = c.z[j];
      jac.col(1) = r_[i] * c.zdot[j];
      const double det = jac.determinant();
      if (!(det > kQualityThreshold * r_[i] * c.z[j].squaredNorm())) {
        fail(ErrorCode::MeshQuality, "mesh Jacobian degenerate at ring " + std::to_string(i) +
                                         ", angle " + std::to_string(j));
      }
      jac_[k] = jac;
      jac_inv_[k] = jac.inverse();
      if (i == nr - 1) {
        boundary_.push_back(k);
      } else {
        interior_.push_back(k);
      }
    }
  }
  interior_.insert(interior_.begin(), 0);

  double max_radial = 0.0;
  for (const Vec2& z : c.z) max_radial = std::max(max_radial, z.norm() * dr);
  h_max_ = std::max(max_radial, c.spacing());

  stencils_.resize(n);
  h_min_ = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) build_stencil(int(k));
}

void StarMesh::build_stencil(int k) {
  const BoundaryCurve& c = domain_.curve();
  const int ring = ring_of(k);
  const int ang = angle_of(k);
  const double dr = r_[1];
  const Vec2& x0 = nodes_[k];

  // Neighbourhood radius: a few radial and angular spacings.
  double radial = 0.0, angular = 0.0;
  if (ring == 0) {
    for (const Vec2& z : c.z) radial = std::max(radial, z.norm() * dr);
  } else {
    radial = c.z[ang].norm() * dr;
    angular = r_[ring] * c.spacing();
  }
  const double radius = kRadiusFactor * std::max(radial, angular);
  h_min_ = std::min(h_min_, std::max(radial, angular));

  Stencil st;
  if (ring != 0) st.nodes.push_back(k);
  double zmin = std::numeric_limits<double>::infinity();
  for (const Vec2& z : c.z) zmin = std::min(zmin, z.norm());
  const int ring_span = int(std::ceil(radius / (dr * zmin))) + 1;
  const int lo = std::max(0, ring - ring_span);
  const int hi = std::min(nr_ - 1, ring + ring_span);
  if (lo == 0) st.nodes.push_back(0);
  for (int q = std::max(1, lo); q <= hi; ++q) {
    for (int off = -ns_ / 2; off < ns_ - ns_ / 2; ++off) {
      const int node = index(q, ang + off);
      if (node != k && (nodes_[node] - x0).norm() <= radius) st.nodes.push_back(node);
    }
  }
  const int m = int(st.nodes.size());
  if (m < kBasis + 2) {
    fail(ErrorCode::MeshQuality, "too few stencil points at node " + std::to_string(k));
  }

  Eigen::MatrixXd v(m, kBasis);
  Eigen::VectorXd w(m);
  for (int p = 0; p < m; ++p) {
    const Vec2 eta = (nodes_[st.nodes[p]] - x0) / radius;
    double row[kBasis];
    cubic_basis(eta.x(), eta.y(), row);
    w[p] = std::sqrt(std::exp(-kWeightDecay * eta.squaredNorm()));
    for (int b = 0; b < kBasis; ++b) v(p, b) = w[p] * row[b];
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(v);
  if (cod.rank() < kBasis) {
    fail(ErrorCode::MeshQuality, "stencil fit is rank deficient at node " + std::to_string(k));
  }
  const Eigen::MatrixXd pinv = cod.pseudoInverse() * w.asDiagonal();
  const double s1 = 1.0 / radius, s2 = s1 * s1;
  st.dx.resize(m);
  st.dy.resize(m);
  st.dxx.resize(m);
  st.dxy.resize(m);
  st.dyy.resize(m);
  for (int p = 0; p < m; ++p) {
    const double res = (st.nodes[p] == k ? 1.0 : 0.0) - pinv(0, p);
    st.dx[p] = pinv(1, p) * s1;
    st.dy[p] = pinv(2, p) * s1;
    st.dxx[p] = 2.0 * pinv(3, p) * s2 - kResidualPenalty * res * s2;
    st.dxy[p] = pinv(4, p) * s2;
    st.dyy[p] = 2.0 * pinv(5, p) * s2 - kResidualPenalty * res * s2;
  }
  stencils_[k] = std::move(st);
}

Vec2 StarMesh::grad(std::span<const double> f, int k) const {
  const Stencil& st = stencils_[k];
  Vec2 g = Vec2::Zero();
  for (std::size_t p = 0; p < st.nodes.size(); ++p) {
    const double fv = f[st.nodes[p]];
    g.x() += st.dx[p] * fv;
    g.y() += st.dy[p] * fv;
  }
  return g;
}

Mat2 StarMesh::hess(std::span<const double> f, int k) const {
  const Stencil& st = stencils_[k];
  double xx = 0, xy = 0, yy = 0;
  for (std::size_t p = 0; p < st.nodes.size(); ++p) {
    const double fv = f[st.nodes[p]];
    xx += st.dxx[p] * fv;
    xy += st.dxy[p] * fv;
    yy += st.dyy[p] * fv;
  }
  Mat2 h;
  h << xx, xy, xy, yy;
  return h;
}

std::vector<Vec2> StarMesh::grad_cartesian(std::span<const double> f) const {
  require(f.size() == size(), "grad_cartesian: field size does not match mesh");
  std::vector<Vec2> out(size());
  for (std::size_t k = 0; k < size(); ++k) out[k] = grad(f, int(k));
  return out;
}

std::vector<Mat2> StarMesh::hess_cartesian(std::span<const double> f) const {
  require(f.size() == size(), "hess_cartesian: field size does not match mesh");
  std::vector<Mat2> out(size());
  for (std::size_t k = 0; k < size(); ++k) out[k] = hess(f, int(k));
  return out;
}

}  // namespace coneflow
