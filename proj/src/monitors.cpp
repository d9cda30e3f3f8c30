#include "monitors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "errors.hpp"
#include "io.hpp"

namespace coneflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBcLimit = 1e-8;

// ||z|^2 - 1| at boundary angle j.
double zfac(const BoundaryCurve& c, std::size_t j) { return std::abs(c.z[j].squaredNorm() - 1.0); }

// Integral over [t0, t] of (1 - K) / (2 (K + s)(1 + s)) ds.
double rho_drift(double K, double t0, double t) {
  return 0.5 * (std::log((K + t) / (K + t0)) - std::log((1.0 + t) / (1.0 + t0)));
}

}  // namespace

double spacelike_bound(double alpha, const Vec3& mu) {
  const double m3 = mink(mu, kE3);
  return std::sqrt(2.0 * alpha * alpha + 2.0 * (2.0 * alpha * alpha - 1.0) * m3 * m3 + 2.0);
}

MonitorConstants freeze_constants(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                  double alpha, int threads) {
  require(rho_tilde.size() == mesh.size(), "freeze_constants: field size does not match mesh");
  const GeomFrame frame = compute_frame(mesh, rho_tilde, tau, threads);
  const BoundaryCurve& c = mesh.domain().curve();
  MonitorConstants k;
  k.sigma = mesh.domain().sigma();
  k.alpha = alpha;
  k.h = mesh.spacing();
  k.t0 = frame.t();

  double minH = kInf, shLo = kInf, shHi = -kInf;
  k.rho_min0 = kInf;
  k.rho_max0 = -kInf;
  k.graphicality0 = kInf;
  for (std::size_t n = 0; n < frame.nodes.size(); ++n) {
    const PointGeom& p = frame.nodes[n];
    minH = std::min(minH, p.H);
    shLo = std::min(shLo, p.S / p.H);
    shHi = std::max(shHi, p.S / p.H);
    k.rho_min0 = std::min(k.rho_min0, rho_tilde[n]);
    k.rho_max0 = std::max(k.rho_max0, rho_tilde[n]);
    k.v_max0 = std::max(k.v_max0, p.v);
    k.graphicality0 = std::min(k.graphicality0, p.S / (p.v * p.u));
  }
  k.applicable = minH > 0.0;
  if (k.applicable) {
    k.c_sh = 0.5 * shLo - k.t0;
    k.C_sh = 0.5 * shHi - k.t0;
  }
  k.zfac_min = kInf;
  k.zfac_max = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    k.zfac_min = std::min(k.zfac_min, zfac(c, j));
    k.zfac_max = std::max(k.zfac_max, zfac(c, j));
  }
  return k;
}

BoundaryIdentities boundary_identity_residuals(const StarMesh& mesh, const GeomFrame& frame) {
  const std::size_t n = frame.nodes.size();
  std::vector<double> S(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    S[i] = frame.nodes[i].S;
    v[i] = frame.nodes[i].v;
  }
  auto scaled = [](double lhs, double rhs) {
    return std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0});
  };
  BoundaryIdentities out;
  for (const BoundaryPoint& b : boundary_frame(mesh, frame)) {
    const PointGeom& p = frame.nodes[b.node];
    // Parameter-space components of mu^T: g w = <mu, x_j>.
    const Vec3 base = lift(p.xi, 1.0);
    Vec2 proj;
    for (int j = 0; j < 2; ++j) {
      Vec3 xj = p.u * p.drho[j] * base;
      xj[j] += p.u;
      proj[j] = mink(b.mu, xj);
    }
    const Vec2 w = p.ginv * proj;
    const double hmm = w.dot(p.h * w) / w.dot(p.g * w);

    const double lhs33 = w.dot(mesh.grad(S, b.node));
    const double rhs33 = p.S * (-b.sigma * b.hat_h_nn - b.alpha * hmm);
    const double lhs34 = w.dot(mesh.grad(v, b.node));
    const double rhs34 = b.hat_h_e3 - (mink(kE3, b.mu) + b.alpha * p.v) * hmm;
    out.lemma33 = std::max(out.lemma33, scaled(lhs33, rhs33));
    out.lemma34 = std::max(out.lemma34, scaled(lhs34, rhs34));
  }
  return out;
}

MonitorRecord evaluate_monitors(const StarMesh& mesh, std::span<const double> rho_tilde, double tau,
                                const MonitorConstants& k, double dtau, int threads) {
  require(rho_tilde.size() == mesh.size(), "evaluate_monitors: field size does not match mesh");
  const GeomFrame frame = compute_frame(mesh, rho_tilde, tau, threads);
  const auto& ring = mesh.boundary_nodes();
  MonitorRecord r;
  r.tau = tau;
  r.t = frame.t();
  r.slack = 10.0 * (k.h * k.h + dtau);

  r.minH = r.minS = r.shMin = r.rhoMin = r.graphicality = kInf;
  r.maxV = r.shMax = r.rhoMax = -kInf;
  for (std::size_t n = 0; n < frame.nodes.size(); ++n) {
    const PointGeom& p = frame.nodes[n];
    r.minH = std::min(r.minH, p.H);
    r.minS = std::min(r.minS, p.S);
    r.maxV = std::max(r.maxV, p.v);
    r.shMin = std::min(r.shMin, p.S / p.H);
    r.shMax = std::max(r.shMax, p.S / p.H);
    r.rhoMin = std::min(r.rhoMin, rho_tilde[n]);
    r.rhoMax = std::max(r.rhoMax, rho_tilde[n]);
    r.graphicality = std::min(r.graphicality, p.S / (p.v * p.u));
  }
  for (int n : mesh.interior_nodes()) {
    const PointGeom& p = frame.nodes[n];
    r.phiSup = std::max(r.phiSup, std::abs((1.0 + r.t) * p.H / p.S - 0.5));
  }

  const std::vector<BoundaryPoint> bps = boundary_frame(mesh, frame);
  r.xnormLo = kInf;
  r.xnormHi = -kInf;
  r.vBoundExcess = -kInf;
  double vViolation = -kInf;
  for (std::size_t j = 0; j < ring.size(); ++j) {
    const PointGeom& p = frame.nodes[ring[j]];
    const double xn2 = bps[j].xnorm * bps[j].xnorm;
    r.supportRatio = std::max(r.supportRatio, p.S / bps[j].xnorm);
    r.xnormLo = std::min(r.xnormLo, xn2 / (1.0 + r.t));
    r.xnormHi = std::max(r.xnormHi, xn2 / (1.0 + r.t));
    const double bound = spacelike_bound(k.alpha, bps[j].mu);
    r.vBoundExcess = std::max(r.vBoundExcess, p.v - bound);
    vViolation = std::max(vViolation, p.v - std::max(bound, k.v_max0));
  }
  r.bcResidual = boundary_residual_sup(mesh, rho_tilde, k.alpha);
  const BoundaryIdentities ids = boundary_identity_residuals(mesh, frame);
  r.lemma33Res = ids.lemma33;
  r.lemma34Res = ids.lemma34;

  const double slack = r.slack;
  if (k.applicable) {
    r.shLoBand = 2.0 * (k.c_sh + r.t);
    r.shHiBand = 2.0 * (k.C_sh + r.t);
    r.rhoLoBand = k.rho_min0 + rho_drift(k.C_sh, k.t0, r.t);
    r.rhoHiBand = k.rho_max0 + rho_drift(k.c_sh, k.t0, r.t);
    r.xnormLoBand = std::exp(2.0 * r.rhoLoBand) * k.zfac_min;
    r.xnormHiBand = std::exp(2.0 * r.rhoHiBand) * k.zfac_max;
    if (r.minH < -slack) r.verdict |= kMeanConvexity;
    // Compared as S~/H~ = S/(H (1 + t)), which stays bounded.
    const double scale = 1.0 + r.t;
    if ((r.shMin - r.shLoBand) / scale < -slack) r.verdict |= kSpeedLower;
    if ((r.shMax - r.shHiBand) / scale > slack) r.verdict |= kSpeedUpper;
    if (r.rhoMin < r.rhoLoBand - slack || r.rhoMax > r.rhoHiBand + slack) r.verdict |= kRhoBand;
    if (r.xnormLo < r.xnormLoBand - slack || r.xnormHi > r.xnormHiBand + slack) r.verdict |= kXnormBand;
  } else {
    r.shLoBand = r.shHiBand = r.rhoLoBand = r.rhoHiBand = r.xnormLoBand = r.xnormHiBand =
        std::numeric_limits<double>::quiet_NaN();
    r.verdict |= kNotApplicable;
  }
  if (r.minS < -slack) r.verdict |= kGraphicality;
  if (k.sigma < 0) {
    if (vViolation > slack) r.verdict |= kSpacelikeBound;
    if (r.graphicality < 0.5 * k.graphicality0 - slack) r.verdict |= kGraphicalityRatio;
  }
  if (!(r.bcResidual < kBcLimit)) r.verdict |= kBoundaryCondition;
  return r;
}

DecayFit phi_decay_fit(std::span<const MonitorRecord> series, double tau_from, double phi_floor) {
  double s0 = 0, s1 = 0, s2 = 0, sy = 0, sxy = 0;
  for (const MonitorRecord& r : series) {
    if (r.tau < tau_from || !(r.phiSup >= phi_floor)) continue;
    const double y = std::log(r.phiSup);
    s0 += 1;
    s1 += r.tau;
    s2 += r.tau * r.tau;
    sy += y;
    sxy += r.tau * y;
  }
  DecayFit fit;
  fit.points = int(s0);
  const double det = s0 * s2 - s1 * s1;
  if (fit.points < 2 || !(det > 0)) return fit;
  fit.slope = (s0 * sxy - s1 * sy) / det;
  fit.intercept = (sy - fit.slope * s1) / s0;
  fit.passed = fit.slope >= -1.3 && fit.slope <= -0.8;
  return fit;
}

SeriesCount support_ratio_check(std::span<const MonitorRecord> series) {
  SeriesCount c;
  if (series.empty()) return c;
  const double tau0 = series.front().tau;
  double early = 0.0;
  for (const MonitorRecord& r : series) {
    if (r.tau <= tau0 + 1.0) {
      early = std::max(early, r.supportRatio);
    } else if (r.supportRatio > 2.0 * early) {
      ++c.fail;
    } else {
      ++c.pass;
    }
  }
  return c;
}

const std::vector<std::string>& monitor_columns() {
  static const std::vector<std::string> cols{
      "tau",     "t",           "minH",       "minS",       "maxV",        "shMin",       "shMax",
      "shLoBand", "shHiBand",   "rhoMin",     "rhoMax",     "graphicality", "supportRatio", "xnormLo",
      "xnormHi", "phiSup",      "bcResidual", "lemma33Res", "lemma34Res",  "verdictBits"};
  return cols;
}

void write_monitor_header(std::ostream& out) {
  const auto& cols = monitor_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

std::string monitor_row(const MonitorRecord& r) {
  std::ostringstream s;
  for (double x : {r.tau, r.t, r.minH, r.minS, r.maxV, r.shMin, r.shMax, r.shLoBand, r.shHiBand, r.rhoMin,
                   r.rhoMax, r.graphicality, r.supportRatio, r.xnormLo, r.xnormHi, r.phiSup, r.bcResidual,
                   r.lemma33Res, r.lemma34Res}) {
    s << format_double(x) << ',';
  }
  s << r.verdict;
  return s.str();
}

void write_monitor_row(std::ostream& out, const MonitorRecord& r) { out << monitor_row(r) << '\n'; }

}  // namespace coneflow
