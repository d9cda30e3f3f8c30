#include "cone_domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "errors.hpp"

namespace coneflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta, double origin) {
  double t = std::fmod(theta - origin, kTwoPi);
  if (t < 0) t += kTwoPi;
  return origin + t;
}

}  // namespace

Signature classify_signature(const BoundaryCurve& curve) {
  require(curve.size() > 0, "classify_signature: empty curve");
  int sign = 0;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < curve.size(); ++j) {
    const double d = 1.0 - curve.support[j] * curve.support[j];
    const int sj = d > 0 ? 1 : (d < 0 ? -1 : 0);
    if (sj == 0) {
      fail(ErrorCode::DegenerateBoundary,
           "degenerate cone boundary: null at sample " + std::to_string(j) + " (N.z = 1)");
    }
    if (sign == 0) sign = sj;
    if (sj != sign) {
      fail(ErrorCode::MixedSignature,
           "1 - (N.z)^2 changes sign along the boundary (sample " + std::to_string(j) + ")");
    }
    margin = std::min(margin, std::abs(d));
  }
  return {sign, margin};
}

// ---------------------------------------------------------------------------

PeriodicSpline::PeriodicSpline(std::vector<double> theta, std::vector<double> value)
    : x_(std::move(theta)), y_(std::move(value)) {
  const std::size_t m = x_.size();
  require(m >= 3 && y_.size() == m, "PeriodicSpline: need matching samples (>= 3)");
  for (std::size_t k = 1; k < m; ++k) {
    if (!(x_[k] > x_[k - 1])) fail(ErrorCode::Data, "profile angles must be strictly increasing");
  }
  if (!(x_.back() - x_.front() < kTwoPi)) fail(ErrorCode::Data, "profile angles must span less than 2*pi");

  auto h = [&](std::size_t k) {
    return k + 1 < m ? x_[k + 1] - x_[k] : x_[0] + kTwoPi - x_[m - 1];
  };
  auto y = [&](std::size_t k) { return y_[k % m]; };

  Eigen::SparseMatrix<double> a(m, m);
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t km = (k + m - 1) % m;
    const std::size_t kp = (k + 1) % m;
    const double hm = h(km);
    const double hp = h(k);
    trips.emplace_back(k, km, hm);
    trips.emplace_back(k, k, 2.0 * (hm + hp));
    trips.emplace_back(k, kp, hp);
    rhs[k] = 6.0 * ((y(k + 1) - y(k)) / hp - (y(k) - y(km)) / hm);
  }
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a);
  if (lu.info() != Eigen::Success) fail(ErrorCode::Data, "profile spline system is singular");
  Eigen::VectorXd sol = lu.solve(rhs);
  m_.assign(sol.data(), sol.data() + m);
}

PeriodicSpline::Cell PeriodicSpline::cell(double theta) const {
  const std::size_t m = x_.size();
  theta = wrap_angle(theta, x_.front());
  const std::size_t k = std::size_t(std::upper_bound(x_.begin(), x_.end(), theta) - x_.begin()) - 1;
  const std::size_t kp = (k + 1) % m;
  const double x1 = k + 1 < m ? x_[k + 1] : x_[0] + kTwoPi;
  const double h = x1 - x_[k];
  return {h, (x1 - theta) / h, (theta - x_[k]) / h, y_[k], y_[kp], m_[k], m_[kp]};
}

double PeriodicSpline::operator()(double theta) const {
  const Cell c = cell(theta);
  return c.a * c.y0 + c.b * c.y1 +
         ((c.a * c.a * c.a - c.a) * c.m0 + (c.b * c.b * c.b - c.b) * c.m1) * c.h * c.h / 6.0;
}

double PeriodicSpline::d1(double theta) const {
  const Cell c = cell(theta);
  return (c.y1 - c.y0) / c.h - (3 * c.a * c.a - 1) / 6.0 * c.h * c.m0 +
         (3 * c.b * c.b - 1) / 6.0 * c.h * c.m1;
}

double PeriodicSpline::d2(double theta) const {
  const Cell c = cell(theta);
  return c.a * c.m0 + c.b * c.m1;
}

// ---------------------------------------------------------------------------

namespace {

BoundaryCurve circle_curve(double radius, std::size_t n) {
  BoundaryCurve c;
  c.length = kTwoPi * radius;
  for (std::size_t j = 0; j < n; ++j) {
    const double theta = kTwoPi * double(j) / double(n);
    const Vec2 dir(std::cos(theta), std::sin(theta));
    c.s.push_back(radius * theta);
    c.z.push_back(radius * dir);
    c.zdot.emplace_back(-dir.y(), dir.x());
    c.normal.push_back(dir);
    c.kappa.push_back(1.0 / radius);
    c.support.push_back(radius);
  }
  return c;
}

BoundaryCurve profile_curve(const PeriodicSpline& r, std::size_t n) {
  auto speed = [&](double t) {
    const double rv = r(t), rd = r.d1(t);
    return std::sqrt(rv * rv + rd * rd);
  };
  // three-point Gauss-Legendre on [a, b]
  auto gauss = [&](double a, double b) {
    static const double xg = std::sqrt(3.0 / 5.0);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    return half * (5.0 / 9.0 * speed(mid - half * xg) + 8.0 / 9.0 * speed(mid) +
                   5.0 / 9.0 * speed(mid + half * xg));
  };

  const std::size_t fine = std::max<std::size_t>(8192, 64 * n);
  const double dt = kTwoPi / double(fine);
  std::vector<double> cumulative(fine + 1, 0.0);
  for (std::size_t g = 0; g < fine; ++g) {
    cumulative[g + 1] = cumulative[g] + gauss(g * dt, (g + 1) * dt);
  }

  BoundaryCurve c;
  c.length = cumulative.back();
  for (std::size_t j = 0; j < n; ++j) {
    const double target = c.length * double(j) / double(n);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t g = std::min<std::size_t>(std::size_t(it - cumulative.begin()) - 1, fine - 1);
    const double t0 = g * dt;
    double t = t0 + dt * (target - cumulative[g]) / (cumulative[g + 1] - cumulative[g]);
    for (int it_newton = 0; it_newton < 6; ++it_newton) {
      const double arc = cumulative[g] + gauss(t0, t);
      t -= (arc - target) / speed(t);
    }
    const double rv = r(t), rd = r.d1(t), rdd = r.d2(t);
    const Vec2 dir(std::cos(t), std::sin(t));
    const Vec2 perp(-dir.y(), dir.x());
    const Vec2 tangent = rd * dir + rv * perp;
    const double sp = tangent.norm();
    const Vec2 zdot = tangent / sp;
    const Vec2 normal(zdot.y(), -zdot.x());
    c.s.push_back(target);
    c.z.push_back(rv * dir);
    c.zdot.push_back(zdot);
    c.normal.push_back(normal);
    c.kappa.push_back((rv * rv + 2 * rd * rd - rv * rdd) / (sp * sp * sp));
    c.support.push_back(normal.dot(rv * dir));
  }
  return c;
}

}  // namespace

void ConeDomain::finish() {
  for (std::size_t j = 0; j < curve_.size(); ++j) {
    if (!(curve_.kappa[j] > 0.0)) {
      fail(ErrorCode::NonConvex, "boundary curvature is not positive at sample " + std::to_string(j) +
                                     " (kappa = " + std::to_string(curve_.kappa[j]) + ")");
    }
    if (!(curve_.support[j] > 0.0)) {
      fail(ErrorCode::InvalidArgument, "origin is not strictly inside the domain");
    }
  }
  signature_ = classify_signature(curve_);
  if (signature_.margin < opts_.degeneracy_threshold) {
    fail(ErrorCode::DegenerateBoundary,
         "cone boundary is nearly null: min |1-(N.z)^2| = " + std::to_string(signature_.margin));
  }
}

ConeDomain ConeDomain::round(double radius, std::size_t n, DomainOptions opts) {
  require(radius > 0.0, "round cone: radius must be positive");
  require(n >= 16, "round cone: need at least 16 samples");
  ConeDomain d;
  d.opts_ = opts;
  d.radius_ = radius;
  d.curve_ = circle_curve(radius, n);
  d.finish();
  return d;
}

ConeDomain ConeDomain::from_radial_profile(std::span<const double> theta,
                                           std::span<const double> radius, std::size_t n,
                                           DomainOptions opts) {
  require(theta.size() == radius.size(), "radial profile: size mismatch");
  require(theta.size() >= 8, "radial profile: need at least 8 samples");
  require(n >= 16, "radial profile: need at least 16 resamples");
  for (double r : radius) require(r > 0.0, "radial profile: radii must be positive");
  ConeDomain d;
  d.opts_ = opts;
  d.profile_ = std::make_shared<PeriodicSpline>(std::vector<double>(theta.begin(), theta.end()),
                                                std::vector<double>(radius.begin(), radius.end()));
  d.curve_ = profile_curve(*d.profile_, n);
  d.finish();
  return d;
}

ConeDomain ConeDomain::from_profile_file(const std::filesystem::path& path, std::size_t n,
                                         DomainOptions opts) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open profile file " + path.string());
  std::vector<double> theta, radius;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t, r;
    std::string extra;
    if (!(ls >> t >> r) || (ls >> extra)) {
      fail(ErrorCode::Data, path.string() + ":" + std::to_string(lineno) + ": expected 'theta radius'");
    }
    if (t < 0.0 || t >= kTwoPi) {
      fail(ErrorCode::Data, path.string() + ":" + std::to_string(lineno) + ": theta outside [0, 2pi)");
    }
    theta.push_back(t);
    radius.push_back(r);
  }
  return from_radial_profile(theta, radius, n, opts);
}

double ConeDomain::min_curvature() const {
  return *std::min_element(curve_.kappa.begin(), curve_.kappa.end());
}

std::optional<double> ConeDomain::round_radius() const { return radius_; }

ConeDomain ConeDomain::resampled(std::size_t n) const {
  if (radius_) return round(*radius_, n, opts_);
  ConeDomain d;
  d.opts_ = opts_;
  d.profile_ = profile_;
  d.curve_ = profile_curve(*profile_, n);
  d.finish();
  return d;
}

double ConeDomain::gauge(const Vec2& xi) const {
  const double rho = xi.norm();
  if (rho == 0.0) return 0.0;
  if (radius_) return rho / *radius_;
  return rho / (*profile_)(std::atan2(xi.y(), xi.x()));
}

}  // namespace coneflow
