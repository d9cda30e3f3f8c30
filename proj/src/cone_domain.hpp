#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "linalg.hpp"

namespace coneflow {

/// Uniform arc-length samples of the closed convex curve bounding Omega.
/// Orientation is counter-clockwise, so `normal` is outward.
struct BoundaryCurve {
  double length = 0.0;
  std::vector<double> s;
  std::vector<Vec2> z;
  std::vector<Vec2> zdot;
  std::vector<Vec2> normal;
  std::vector<double> kappa;
  std::vector<double> support;  // N . z

  std::size_t size() const { return z.size(); }
  double spacing() const { return length / double(size()); }
};

struct Signature {
  int sigma = 0;
  double margin = 0.0;  // min |1 - (N.z)^2|
};

/// Sign of 1 - (N.z)^2 over the curve; throws MixedSignature if it changes.
Signature classify_signature(const BoundaryCurve& curve);

/// Periodic cubic spline through (theta_k, r_k) on [0, 2 pi).
class PeriodicSpline {
 public:
  PeriodicSpline(std::vector<double> theta, std::vector<double> value);
  double operator()(double theta) const;
  double d1(double theta) const;
  double d2(double theta) const;

 private:
  struct Cell {
    double h, a, b, y0, y1, m0, m1;
  };
  Cell cell(double theta) const;
  std::vector<double> x_, y_, m_;  // m_ are second derivatives at knots
};

struct DomainOptions {
  double degeneracy_threshold = 1e-3;
};

/// The convex planar domain generating the cone, with its boundary samples
/// and the signature of the cone boundary. Immutable.
class ConeDomain {
 public:
  static ConeDomain round(double radius, std::size_t n, DomainOptions opts = {});
  static ConeDomain from_radial_profile(std::span<const double> theta,
                                        std::span<const double> radius,
                                        std::size_t n, DomainOptions opts = {});
  /// Reads "theta radius" lines.
  static ConeDomain from_profile_file(const std::filesystem::path& path,
                                      std::size_t n, DomainOptions opts = {});

  const BoundaryCurve& curve() const { return curve_; }
  int sigma() const { return signature_.sigma; }
  double degeneracy_margin() const { return signature_.margin; }
  double min_curvature() const;
  /// Radius if the domain is a round disc centred at the origin.
  std::optional<double> round_radius() const;

  /// Same generating curve sampled at n arc-length points.
  ConeDomain resampled(std::size_t n) const;

  /// Gauge function: the r in [0,1] with xi = r z(s); evaluated through the
  /// generating curve.
  double gauge(const Vec2& xi) const;

 private:
  ConeDomain() = default;
  void finish();

  BoundaryCurve curve_;
  Signature signature_;
  DomainOptions opts_;
  std::optional<double> radius_;
  std::shared_ptr<const PeriodicSpline> profile_;
};

}  // namespace coneflow
