#include <cmath>
#include <numbers>
#include <random>

#include "capillary_bc.hpp"
#include "doctest.h"
#include "errors.hpp"

using namespace coneflow;

namespace {

ConeDomain ellipse(double a, double b) {
  std::vector<double> th, r;
  for (int k = 0; k < 256; ++k) {
    const double t = 2.0 * std::numbers::pi * k / 256;
    th.push_back(t);
    r.push_back(a * b / std::hypot(b * std::cos(t), a * std::sin(t)));
  }
  return ConeDomain::from_radial_profile(th, r, 128);
}

std::vector<double> hyperboloid(const StarMesh& m) {
  return m.sample([](const Vec2& x) { return std::log(2.0) - 0.5 * std::log(1.0 - x.squaredNorm()); });
}

}  // namespace

TEST_CASE("cone normal") {
  const Vec3 m1 = cone_normal(Vec2(0.5, 0.0), Vec2(1.0, 0.0));
  CHECK((m1 - Vec3(1.0, 0.0, 0.5) / std::sqrt(0.75)).norm() < 1e-14);
  CHECK(mink(m1, m1) == doctest::Approx(1.0).epsilon(1e-12));
  const Vec3 m2 = cone_normal(Vec2(2.0, 0.0), Vec2(1.0, 0.0));
  CHECK((m2 - Vec3(1.0, 0.0, 2.0) / std::sqrt(3.0)).norm() < 1e-14);
  CHECK(mink(m2, m2) == doctest::Approx(-1.0).epsilon(1e-12));
  for (const ConeDomain& d : {ConeDomain::round(0.5, 64), ellipse(2.5, 3.0)}) {
    const BoundaryCurve& c = d.curve();
    for (std::size_t j = 0; j < c.size(); ++j) {
      const Vec3 mu = cone_normal(c.z[j], c.normal[j]);
      CHECK(std::abs(mink(mu, lift(c.z[j], 1.0))) < 1e-12);
      CHECK(mink(mu, mu) == doctest::Approx(double(d.sigma())).epsilon(1e-10));
    }
  }
}

TEST_CASE("boundary residual") {
  const Vec2 N(1.0, 0.0);
  CHECK(std::abs(b_residual(Vec2(2.0, 0.0), N, Vec2::Zero(), 2.0 / std::sqrt(3.0))) < 1e-14);
  CHECK(std::abs(b_residual(Vec2(0.5, 0.0), N, Vec2(2.0 / 3.0, 0.0), 0.0)) < 1e-14);
  const Vec2 xi(0.3, 0.35), Nr = xi.normalized(), p(0.2, -0.4);
  CHECK(b_residual(xi, Nr, p, 0.7) - b_residual(xi, Nr, p, 0.2) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("obliqueness") {
  CHECK(obliqueness(Vec2(0.5, 0.0), Vec2(1.0, 0.0), Vec2(2.0 / 3.0, 0.0), 0.0) ==
        doctest::Approx(0.75).epsilon(1e-12));
  // alpha = 1 on a spacelike cone boundary: b = 0 is reached only as |p| grows
  // along N, and the obliqueness vanishes with it.
  for (double c : {1e2, 1e3, 1e4}) {
    const Vec2 xi(2.0, 0.0), N(1.0, 0.0), p(c, 0.0);
    CHECK(std::abs(b_residual(xi, N, p, 1.0)) < 1.0 / c);
    CHECK(std::abs(obliqueness(xi, N, p, 1.0)) < 1.0 / (c * c));
  }

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int tested = 0;
  while (tested < 100) {
    const double R = tested % 2 ? 0.5 + 0.4 * U(rng) : 2.0 + 0.5 * U(rng);
    const double th = std::numbers::pi * U(rng);
    const Vec2 N(std::cos(th), std::sin(th));
    const Vec2 xi = R * N;
    const Vec2 p(U(rng), U(rng));
    if (spacelike_margin(xi, p) < 0.05) continue;
    const double alpha = 2.0 * U(rng);
    const double eps = 1e-6;
    const double fd = (b_residual(xi, N, p + eps * N, alpha) - b_residual(xi, N, p - eps * N, alpha)) / (2 * eps);
    const double an = obliqueness(xi, N, p, alpha);
    CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)));
    CHECK(std::abs(N.dot(b_gradient(xi, N, p)) - an) <= 1e-10 * std::max(1.0, std::abs(an)));
    ++tested;
  }
}

TEST_CASE("cone second fundamental form") {
  const ConeDomain round = ConeDomain::round(0.5, 64);
  for (std::size_t j = 0; j < round.curve().size(); ++j) {
    const BoundaryCurve& c = round.curve();
    CHECK(q_factor(c.z[j], c.zdot[j], c.normal[j], c.kappa[j]) == doctest::Approx(2.0).epsilon(1e-10));
  }
  const BoundaryCurve& c = round.curve();
  const double u = 2.0 / std::sqrt(0.75);
  CHECK(std::abs(hat_h_nn(2.0, u, c.z[0], c.zdot[0], c.normal[0], c.kappa[0], 0.0)) < 1e-12);

  // Independent check: decompose nu^Sigma in the cone tangent basis
  // (z + e3, u zdot), where h^Sigma has the single entry u kappa / sqrt|1 - (N.z)^2|.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (const ConeDomain& d : {ConeDomain::round(0.5, 64), ConeDomain::round(2.0, 64), ellipse(0.4, 0.6),
                              ellipse(2.5, 3.0)}) {
    const BoundaryCurve& bc = d.curve();
    for (std::size_t j = 0; j < bc.size(); j += 7) {
      const Vec2 z = bc.z[j], N = bc.normal[j], zd = bc.zdot[j];
      const Vec2 p(0.3 * U(rng), 0.3 * U(rng));
      if (spacelike_margin(z, p) < 0.05) continue;
      const double u = std::exp(0.5 * U(rng));
      const NormalData nd = unit_normal(u, u * p, z);
      const Vec3 mu = cone_normal(z, N);
      const int sigma = d.sigma();
      const double alpha = -mink(nd.nu, mu);
      if (std::abs(alpha * alpha + sigma) < 0.05) continue;
      const Vec3 nus = nd.nu + sigma * alpha * mu;
      CHECK(std::abs(mink(nus, mu)) < 1e-12);
      Eigen::Matrix<double, 3, 2> B;
      B.col(0) = lift(z, 1.0);
      B.col(1) = u * lift(zd);
      const Vec2 coef = B.colPivHouseholderQr().solve(nus);
      CHECK((B * coef - nus).norm() < 1e-10);
      const double hss = u * bc.kappa[j] / std::sqrt(std::abs(1.0 - std::pow(N.dot(z), 2)));
      const double nn2 = std::abs(mink(nus, nus));
      const double expected = coef[1] * coef[1] * hss / nn2;
      CHECK(hat_h_nn(nd.S, u, z, zd, N, bc.kappa[j], alpha) == doctest::Approx(expected).epsilon(1e-9));
      if (sigma < 0) CHECK(expected >= 0);

      const double q = q_factor(z, zd, N, bc.kappa[j]);
      const Vec3 x = u * lift(z, 1.0);
      // Z tangent to Sigma and orthogonal to nu^Sigma.
      const Vec2 zc(mink(B.col(1), nus), -mink(B.col(0), nus));
      const Vec3 Z = B * zc;
      CHECK(std::abs(mink(Z, nus)) < 1e-12);
      CHECK(hat_h_z_nusigma(Z, nd.S, x, q, sigma) ==
            doctest::Approx(zc[1] * coef[1] * hss).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("boundary frame identities") {
  const StarMesh m(ConeDomain::round(0.5, 512), 16, 32);
  auto f = hyperboloid(m);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] += 0.05 * m.node(int(k)).x();
  enforce_boundary(m, f, 0.3);
  const GeomFrame frame = compute_frame(m, f, 0.0);
  for (const BoundaryPoint& b : boundary_frame(m, frame)) {
    const PointGeom& p = frame.nodes[b.node];
    CHECK(b.alpha == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(std::abs(mink(b.mu, p.x)) < 1e-10);
    CHECK(std::abs(mink(b.mu_top, p.nu)) < 1e-10);
    CHECK(std::abs(mink(b.nu_sigma, b.mu)) < 1e-10);
    CHECK(b.mu_top_norm2 == doctest::Approx(0.3 * 0.3 + 1.0).epsilon(1e-9));
  }
}

TEST_CASE("enforce boundary") {
  for (int nr : {16, 32}) {
    const StarMesh m(ConeDomain::round(0.5, 512), nr, 2 * nr);
    const auto exact = hyperboloid(m);
    auto f = exact;
    const BoundaryReport rep = enforce_boundary(m, f, 0.0);
    CHECK(rep.max_residual < 1e-10);
    CHECK(rep.min_obliqueness > 0.7);
    double moved = 0;
    for (std::size_t k = 0; k < f.size(); ++k) moved = std::max(moved, std::abs(f[k] - exact[k]));
    const double h = m.spacing();
    CHECK(moved < h * h * h);
    auto again = f;
    enforce_boundary(m, again, 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(std::abs(again[k] - f[k]) < 1e-9);
  }
  const StarMesh big(ConeDomain::round(2.0, 512), 16, 32);
  std::vector<double> flat(big.size(), 0.3);
  enforce_boundary(big, flat, 2.0 / std::sqrt(3.0));
  for (double x : flat) CHECK(std::abs(x - 0.3) < 1e-12);
  try {
    enforce_boundary(big, flat, 1.0);
    FAIL("expected obliqueness loss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ObliquenessLoss);
  }
}
