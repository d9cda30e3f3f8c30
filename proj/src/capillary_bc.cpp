#include "capillary_bc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "errors.hpp"
#include "parallel.hpp"

namespace coneflow {

namespace {

int signature_at(const Vec2& xi, const Vec2& N) {
  const double d = 1.0 - std::pow(N.dot(xi), 2);
  return d > 0 ? 1 : -1;
}

Vec3 flip_time(const Vec3& a) { return {a.x(), a.y(), -a.z()}; }

}  // namespace

Vec3 cone_normal(const Vec2& z, const Vec2& N, double min_margin) {
  const double nz = N.dot(z);
  const double d = std::abs(1.0 - nz * nz);
  if (!(d >= min_margin) || d == 0.0) {
    fail(ErrorCode::DegenerateBoundary, "cone boundary is null: |1-(N.z)^2| = " + std::to_string(d));
  }
  return Vec3(N.x(), N.y(), nz) / std::sqrt(d);
}

double b_residual(const Vec2& xi, const Vec2& N, const Vec2& p, double alpha) {
  const double m = spacelike_margin(xi, p);
  if (!(m > 0.0)) {
    fail(ErrorCode::NotSpacelike, "b: gradient is not spacelike (margin " + std::to_string(m) + ")");
  }
  const double nx = N.dot(xi);
  const double n = p.dot(N) - nx * (1.0 + xi.dot(p));
  return n / (std::sqrt(std::abs(nx * nx - 1.0)) * std::sqrt(m)) + alpha;
}

Vec2 b_gradient(const Vec2& xi, const Vec2& N, const Vec2& p) {
  const double m = spacelike_margin(xi, p);
  if (!(m > 0.0)) {
    fail(ErrorCode::NotSpacelike, "b: gradient is not spacelike (margin " + std::to_string(m) + ")");
  }
  const double nx = N.dot(xi);
  const double a = 1.0 + xi.dot(p);
  const double n = p.dot(N) - nx * a;
  const double s1 = std::sqrt(std::abs(nx * nx - 1.0));
  const double s2 = std::sqrt(m);
  const Vec2 dn = N - nx * xi;
  const Vec2 dm = 2.0 * a * xi - 2.0 * p;
  return (dn / s2 - n * dm / (2.0 * s2 * m)) / s1;
}

double obliqueness(const Vec2& xi, const Vec2& N, const Vec2& p, double alpha) {
  const double nx = N.dot(xi);
  const double s1 = std::sqrt(std::abs(nx * nx - 1.0));
  const double bma = b_residual(xi, N, p, alpha) - alpha;
  return s1 * (bma * bma + signature_at(xi, N)) / std::sqrt(spacelike_margin(xi, p));
}

double q_factor(const Vec2& z, const Vec2& zdot, const Vec2& N, double kappa) {
  const double lz = std::abs(z.squaredNorm() - 1.0);
  if (!(lz > 0.0)) fail(ErrorCode::DegenerateBoundary, "boundary point on the unit circle: |x| = 0");
  const int sigma = signature_at(z, N);
  const double tz = zdot.dot(z) / std::sqrt(lz);
  return std::sqrt(lz) * kappa /
         ((1.0 + sigma * tz * tz) * std::sqrt(std::abs(1.0 - std::pow(N.dot(z), 2))));
}

double hat_h_nn(double S, double u, const Vec2& z, const Vec2& zdot, const Vec2& N, double kappa,
                double alpha) {
  const int sigma = signature_at(z, N);
  const double xnorm = u * std::sqrt(std::abs(z.squaredNorm() - 1.0));
  const double nn2 = std::abs(alpha * alpha + sigma);
  const double q = q_factor(z, zdot, N, kappa);
  return sigma / xnorm * (S * S / (xnorm * xnorm) - nn2) * q / nn2;
}

double hat_h_z_nusigma(const Vec3& Z, double S, const Vec3& x, double q, int sigma) {
  const double xnorm = std::sqrt(std::abs(mink(x, x)));
  return -sigma * S * mink(Z, x) * q / (xnorm * xnorm * xnorm);
}

std::vector<BoundaryPoint> boundary_frame(const StarMesh& mesh, const GeomFrame& frame) {
  const BoundaryCurve& c = mesh.domain().curve();
  const auto& ring = mesh.boundary_nodes();
  std::vector<BoundaryPoint> out(ring.size());
  for (std::size_t j = 0; j < ring.size(); ++j) {
    const int k = ring[j];
    const PointGeom& p = frame.nodes[k];
    BoundaryPoint b;
    b.node = k;
    b.sigma = signature_at(c.z[j], c.normal[j]);
    b.mu = cone_normal(c.z[j], c.normal[j]);
    b.alpha = -mink(p.nu, b.mu);
    b.mu_top = b.mu - b.alpha * p.nu;
    b.nu_sigma = p.nu + b.sigma * b.alpha * b.mu;
    b.mu_top_norm2 = mink(b.mu_top, b.mu_top);
    b.nu_sigma_norm2 = std::abs(mink(b.nu_sigma, b.nu_sigma));
    const Vec3 w = flip_time(p.nu).cross(flip_time(b.mu));
    b.gamma = w / std::sqrt(std::abs(mink(w, w)));
    b.e3_proj = mink(kE3, b.gamma) * b.gamma;
    b.x_proj = mink(p.x, b.gamma) * b.gamma;
    b.xnorm = std::sqrt(std::abs(mink(p.x, p.x)));
    b.q = q_factor(c.z[j], c.zdot[j], c.normal[j], c.kappa[j]);
    b.hat_h_nn = hat_h_nn(p.S, p.u, c.z[j], c.zdot[j], c.normal[j], c.kappa[j], b.alpha);
    b.hat_h_e3 = hat_h_z_nusigma(b.e3_proj, p.S, p.x, b.q, b.sigma);
    out[j] = b;
  }
  return out;
}

double boundary_residual_sup(const StarMesh& mesh, std::span<const double> field, double alpha) {
  const BoundaryCurve& c = mesh.domain().curve();
  const auto& ring = mesh.boundary_nodes();
  double worst = 0.0;
  for (std::size_t j = 0; j < ring.size(); ++j) {
    const int k = ring[j];
    worst = std::max(worst, std::abs(b_residual(mesh.node(k), c.normal[j], mesh.grad(field, k), alpha)));
  }
  return worst;
}

namespace {

struct NodeProblem {
  Vec2 xi, N, P, c;
  double alpha;

  Vec2 p(double f) const { return P + f * c; }
  double margin(double f) const { return spacelike_margin(xi, p(f)); }
  double b(double f) const { return b_residual(xi, N, p(f), alpha); }
  double db(double f) const { return b_gradient(xi, N, p(f)).dot(c); }

  // Admissible open interval (margin > 0) containing f0.
  std::pair<double, double> interval(double f0) const {
    const double A = 1.0 + xi.dot(P), B = xi.dot(c);
    const double qa = B * B - c.squaredNorm();
    const double qb = 2.0 * (A * B - P.dot(c));
    const double qc = A * A - P.squaredNorm();
    const double inf = std::numeric_limits<double>::infinity();
    double lo = -inf, hi = inf;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (qa != 0.0 && disc > 0.0) {
      const double sq = std::sqrt(disc);
      const double t = -0.5 * (qb + std::copysign(sq, qb));
      double r1 = t / qa, r2 = t != 0.0 ? qc / t : r1;
      if (r1 > r2) std::swap(r1, r2);
      if (f0 < r1) {
        hi = r1;
      } else if (f0 > r2) {
        lo = r2;
      } else {
        lo = r1;
        hi = r2;
      }
    } else if (qa == 0.0 && qb != 0.0) {
      const double r = -qc / qb;
      if (f0 < r) hi = r; else lo = r;
    }
    return {lo, hi};
  }
};

[[noreturn]] void solve_failure(const Vec2& xi, const std::string& why) {
  std::ostringstream os;
  os << "boundary solve failed at xi = (" << xi.x() << ", " << xi.y() << "): " << why;
  fail(ErrorCode::BoundarySolve, os.str());
}

// Moves f0 into the admissible set if needed.
double admissible_start(const NodeProblem& pr, double f0) {
  if (pr.margin(f0) > 0.0) return f0;
  const double A = 1.0 + pr.xi.dot(pr.P), B = pr.xi.dot(pr.c);
  const double qa = B * B - pr.c.squaredNorm();
  const double qb = 2.0 * (A * B - pr.P.dot(pr.c));
  const double qc = A * A - pr.P.squaredNorm();
  const double disc = qb * qb - 4.0 * qa * qc;
  if (qa < 0.0 && disc > 0.0) return -qb / (2.0 * qa);
  if (qa > 0.0) {
    const double sq = disc > 0.0 ? std::sqrt(disc) : 0.0;
    const double r1 = (-qb - sq) / (2.0 * qa), r2 = (-qb + sq) / (2.0 * qa);
    const double span = std::max(1.0, std::abs(r2 - r1));
    return std::abs(f0 - r1) < std::abs(f0 - r2) ? r1 - span : r2 + span;
  }
  solve_failure(pr.xi, "no spacelike boundary slope exists");
}

double solve_node(const NodeProblem& pr, double f0, const BoundaryOptions& opts) {
  f0 = admissible_start(pr, f0);
  const auto [lo, hi] = pr.interval(f0);
  double b0 = pr.b(f0);
  if (std::abs(b0) < 0.1 * opts.tol) return f0;
  const double d0 = pr.db(f0);
  // b is monotone across the admissible interval; walk toward the root.
  const double dir = (b0 > 0) == (d0 > 0) ? -1.0 : 1.0;
  const double bound = dir > 0 ? hi : lo;
  double step = d0 != 0.0 ? std::abs(b0 / d0) : 1e-3;
  if (!(step > 0.0) || !std::isfinite(step)) step = 1e-3;
  double a = f0, fa = b0, bpt = f0, fb = b0;
  bool bracketed = false;
  for (int k = 0; k < 200 && !bracketed; ++k) {
    double trial = a + dir * step;
    if (std::isfinite(bound) && (dir > 0 ? trial >= bound : trial <= bound)) {
      trial = a + 0.5 * (bound - a);
    }
    const double ft = pr.b(trial);
    if ((ft > 0) != (fa > 0) || ft == 0.0) {
      bpt = trial;
      fb = ft;
      bracketed = true;
    } else {
      a = trial;
      fa = ft;
      step *= 2.0;
    }
  }
  if (!bracketed) solve_failure(pr.xi, "no root of b in the spacelike interval");
  if (fb == 0.0) return bpt;

  // Safeguarded Newton inside [a, bpt].
  double left = std::min(a, bpt), right = std::max(a, bpt);
  const bool left_positive = (a < bpt ? fa : fb) > 0;
  double f = 0.5 * (left + right);
  int newton = 0, bisect = 0;
  while (newton < opts.max_newton || bisect < opts.max_bisect) {
    const double bf = pr.b(f);
    if (std::abs(bf) < 0.1 * opts.tol) return f;
    if ((bf > 0) == left_positive) left = f; else right = f;
    const double df = pr.db(f);
    double next = df != 0.0 ? f - bf / df : left - 1.0;
    if (newton < opts.max_newton && next > left && next < right) {
      ++newton;
    } else {
      next = 0.5 * (left + right);
      ++bisect;
      if (bisect > opts.max_bisect) break;
    }
    if (next == f || right - left <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(f)) {
      return next;
    }
    f = next;
  }
  return f;
}

struct RingSystem {
  const StarMesh& mesh;
  double alpha;

  // Ring value j's weight in the stencil of boundary node k.
  Vec2 self_weight(int k) const {
    const Stencil& st = mesh.stencil(k);
    for (std::size_t p = 0; p < st.nodes.size(); ++p) {
      if (st.nodes[p] == k) return {st.dx[p], st.dy[p]};
    }
    return Vec2::Zero();
  }
};

}  // namespace

BoundaryReport enforce_boundary(const StarMesh& mesh, std::vector<double>& field, double alpha,
                                const BoundaryOptions& opts) {
  require(field.size() == mesh.size(), "enforce_boundary: field size does not match mesh");
  const BoundaryCurve& c = mesh.domain().curve();
  const auto& ring = mesh.boundary_nodes();
  const std::size_t nb = ring.size();

  {
    const int sigma = signature_at(c.z[0], c.normal[0]);
    if (!(alpha * alpha + sigma > 1e-8)) {
      fail(ErrorCode::ObliquenessLoss,
           "boundary condition is not oblique: alpha^2 + sigma = " + std::to_string(alpha * alpha + sigma));
    }
  }

  RingSystem sys{mesh, alpha};
  std::vector<Vec2> self(nb);
  std::vector<int> position(mesh.size(), -1);
  for (std::size_t j = 0; j < nb; ++j) {
    self[j] = sys.self_weight(ring[j]);
    position[ring[j]] = int(j);
  }

  auto residuals = [&](const std::vector<double>& f, std::vector<double>& r) {
    r.assign(nb, 0.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      const int k = ring[j];
      const Vec2 p = mesh.grad(f, k);
      if (!(spacelike_margin(mesh.node(k), p) > 0.0)) return std::numeric_limits<double>::infinity();
      r[j] = b_residual(mesh.node(k), c.normal[j], p, alpha);
      worst = std::max(worst, std::abs(r[j]));
    }
    return worst;
  };

  auto jacobi_sweep = [&]() {
    std::vector<double> next(nb);
    parallel_for(nb, opts.threads, [&](std::size_t j) {
      const int k = ring[j];
      const Vec2 g = mesh.grad(field, k);
      NodeProblem pr{mesh.node(k), c.normal[j], g - field[k] * self[j], self[j], alpha};
      next[j] = solve_node(pr, field[k], opts);
    });
    for (std::size_t j = 0; j < nb; ++j) field[ring[j]] = next[j];
  };

  BoundaryReport rep;
  std::vector<double> r;
  double worst = residuals(field, r);
  if (!std::isfinite(worst)) {
    jacobi_sweep();
    worst = residuals(field, r);
  }

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analyzed = false;
  int iter = 0;
  while (worst >= opts.tol && iter < opts.max_sweeps) {
    ++iter;
    // Coupled Newton step on the ring values.
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t j = 0; j < nb; ++j) {
      const int k = ring[j];
      const Vec2 db = b_gradient(mesh.node(k), c.normal[j], mesh.grad(field, k));
      const Stencil& st = mesh.stencil(k);
      for (std::size_t p = 0; p < st.nodes.size(); ++p) {
        const int col = position[st.nodes[p]];
        if (col >= 0) trips.emplace_back(int(j), col, db.x() * st.dx[p] + db.y() * st.dy[p]);
      }
    }
    Eigen::SparseMatrix<double> jac(nb, nb);
    jac.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      lu.analyzePattern(jac);
      analyzed = true;
    }
    lu.factorize(jac);
    bool improved = false;
    if (lu.info() == Eigen::Success) {
      Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(r.data(), Eigen::Index(nb));
      const Eigen::VectorXd delta = lu.solve(rhs);
      std::vector<double> trial = field;
      std::vector<double> rt;
      for (double lambda = 1.0; lambda > 1e-4; lambda *= 0.5) {
        for (std::size_t j = 0; j < nb; ++j) trial[ring[j]] = field[ring[j]] - lambda * delta[Eigen::Index(j)];
        const double w = residuals(trial, rt);
        if (w < worst) {
          field.swap(trial);
          r.swap(rt);
          worst = w;
          improved = true;
          break;
        }
      }
    }
    if (!improved) {
      jacobi_sweep();
      worst = residuals(field, r);
    }
  }
  rep.iterations = iter;
  rep.max_residual = worst;
  if (!(worst < opts.tol)) {
    fail(ErrorCode::BoundarySolve,
         "boundary condition not met after " + std::to_string(iter) + " iterations: |b| = " + std::to_string(worst));
  }
  rep.min_obliqueness = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < nb; ++j) {
    const int k = ring[j];
    const double o = obliqueness(mesh.node(k), c.normal[j], mesh.grad(field, k), alpha);
    rep.min_obliqueness = std::min(rep.min_obliqueness, o);
  }
  if (!(rep.min_obliqueness > 1e-8)) {
    fail(ErrorCode::ObliquenessLoss, "obliqueness lost: min N.db/dp = " + std::to_string(rep.min_obliqueness));
  }
  return rep;
}

}  // namespace coneflow
