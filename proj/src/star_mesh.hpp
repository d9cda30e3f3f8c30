#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cone_domain.hpp"
#include "linalg.hpp"

namespace coneflow {

/// Weights turning node values into Cartesian derivatives at one node.
struct Stencil {
  std::vector<int> nodes;
  std::vector<double> dx, dy, dxx, dxy, dyy;
};

/// Tensor-product (r, s) grid over Omega with xi = r z(s). Node 0 is the
/// shared centre; ring i >= 1, angle j lives at 1 + (i-1) ns + j. Ring
/// nr-1 is the boundary.
///
/// Derivatives use per-node least-squares fits of cubic polynomials in xi
/// over a roughly isotropic neighbourhood (one-sided at the boundary), so
/// they are exact on cubics and second order for the Hessian.
class StarMesh {
 public:
  StarMesh(const ConeDomain& domain, int nr, int ns);

  int nr() const { return nr_; }
  int ns() const { return ns_; }
  std::size_t size() const { return nodes_.size(); }

  int index(int ring, int j) const {
    return ring == 0 ? 0 : 1 + (ring - 1) * ns_ + ((j % ns_) + ns_) % ns_;
  }
  int ring_of(int k) const { return k == 0 ? 0 : 1 + (k - 1) / ns_; }
  int angle_of(int k) const { return k == 0 ? 0 : (k - 1) % ns_; }
  bool is_boundary(int k) const { return ring_of(k) == nr_ - 1; }

  const Vec2& node(int k) const { return nodes_[k]; }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<double>& r_values() const { return r_; }
  const std::vector<double>& s_values() const { return domain_.curve().s; }
  const std::vector<int>& boundary_nodes() const { return boundary_; }
  const std::vector<int>& interior_nodes() const { return interior_; }

  /// Boundary data for angle j (the boundary curve sampled at ns points).
  const ConeDomain& domain() const { return domain_; }

  /// d xi / d(r, s) as columns; identity at the centre.
  const Mat2& jacobian(int k) const { return jac_[k]; }
  const Mat2& jacobian_inverse(int k) const { return jac_inv_[k]; }

  /// Largest node spacing (radial or angular), in xi units.
  double spacing() const { return h_max_; }
  /// Smallest local resolution: min over nodes of the larger of the radial
  /// and angular spacing there.
  double min_spacing() const { return h_min_; }

  const Stencil& stencil(int k) const { return stencils_[k]; }

  Vec2 grad(std::span<const double> field, int k) const;
  Mat2 hess(std::span<const double> field, int k) const;

  std::vector<Vec2> grad_cartesian(std::span<const double> field) const;
  std::vector<Mat2> hess_cartesian(std::span<const double> field) const;

  /// Samples f(xi) at every node.
  template <class Fn>
  std::vector<double> sample(Fn&& f) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = f(nodes_[k]);
    return out;
  }

 private:
  void build_stencil(int k);

  ConeDomain domain_;
  int nr_ = 0, ns_ = 0;
  std::vector<double> r_;
  std::vector<Vec2> nodes_;
  std::vector<Mat2> jac_, jac_inv_;
  std::vector<int> boundary_, interior_;
  std::vector<Stencil> stencils_;
  double h_max_ = 0.0, h_min_ = 0.0;
};

}  // namespace coneflow
