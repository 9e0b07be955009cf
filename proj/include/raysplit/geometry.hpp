#pragma once

// The three closed-form model domains, their phase space and event-driven
// free flight. All propagation uses exact chord/arc/segment solutions; there
// is no time stepping anywhere downstream.
//
// Charts:
//   Layered1D   - global coordinate x in [0, L], layer i occupies
//                 [X_{i-1}, X_i] with X_i = sum_{k<=i} L_k; cometric p_i xi^2.
//   GluedDisks  - Cartesian interior of the unit disk per side, boundary
//                 arclength s in [0,2pi) on dD+ (sigma on dD-, s = chi(sigma)).
//   Hemispheres - (longitude, colatitude), equator at colatitude pi/2,
//                 metric c_region^2 * g_std so a great semicircle has length
//                 pi * c_region. Region 0 is the northern (+) side.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <optional>
#include <vector>

#include "raysplit/common.hpp"

namespace raysplit {

enum class ModelVariant { Layered1D, GluedDisks, Hemispheres };
enum class EndCondition { Dirichlet, Neumann };

// ---------------------------------------------------------------------------
// Circle diffeomorphism chi: dD- -> dD+ (strictly increasing, degree 1).

class CircleMap {
 public:
  static CircleMap identity() { return CircleMap(); }

  // chi(s) = s + eps*sin(s + phi0), |eps| < 1.
  static CircleMap sine(double eps, double phi0) {
    CircleMap m;
    m.kind_ = Kind::Sine;
    m.eps_ = eps;
    m.phi0_ = phi0;
    if (std::abs(eps) >= 1.0) throw ConfigError("CircleMap: |eps| must be < 1");
    return m;
  }

  // Raw table of chi at s_i = 2pi i / n, interpolated by a periodic cubic
  // spline of the displacement chi(s) - s.
  static CircleMap table(const std::vector<double>& chi_values) {
    CircleMap m;
    m.kind_ = Kind::Table;
    const std::size_t n = chi_values.size();
    if (n < 4) throw ConfigError("CircleMap: table needs at least 4 samples");
    m.disp_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      m.disp_[i] = chi_values[i] - kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    m.build_spline();
    m.validate_monotone();
    return m;
  }

  bool is_identity() const { return kind_ == Kind::Identity; }

  double chi(double s) const {
    switch (kind_) {
      case Kind::Identity: return s;
      case Kind::Sine: return s + eps_ * std::sin(s + phi0_);
      default: return s + spline_eval(s, 0);
    }
  }
  double dchi(double s) const {
    switch (kind_) {
      case Kind::Identity: return 1.0;
      case Kind::Sine: return 1.0 + eps_ * std::cos(s + phi0_);
      default: return 1.0 + spline_eval(s, 1);
    }
  }
  double ddchi(double s) const {
    switch (kind_) {
      case Kind::Identity: return 0.0;
      case Kind::Sine: return -eps_ * std::sin(s + phi0_);
      default: return spline_eval(s, 2);
    }
  }

  // Monotone inverse: bisection bracket refined by Newton to machine
  // precision (well inside the 1e-12 contract; downstream finite differences
  // depend on the smoothness of this map).
  double inverse(double t) const {
    if (kind_ == Kind::Identity) return t;
    const double period_shift = std::floor(t / kTwoPi) * kTwoPi;
    const double tr = t - period_shift;
    double lo = tr - max_disp_ - 1e-3, hi = tr + max_disp_ + 1e-3;
    for (int i = 0; i < 20; ++i) {
      const double mid = 0.5 * (lo + hi);
      (chi(mid) < tr ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 80; ++i) {
      const double f = chi(x) - tr;
      const double step = f / dchi(x);
      const double xn = x - step;
      if (xn < lo || xn > hi) {  // fall back to bisection progress
        (chi(0.5 * (lo + hi)) < tr ? lo : hi) = 0.5 * (lo + hi);
        x = 0.5 * (lo + hi);
        continue;
      }
      x = xn;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    return x + period_shift;
  }

 private:
  enum class Kind { Identity, Sine, Table };
  Kind kind_ = Kind::Identity;
  double eps_ = 0.0, phi0_ = 0.0;

  // periodic cubic spline of the displacement on a uniform grid
  std::vector<double> disp_, m2_;  // values and second derivatives
  double max_disp_ = 1.0;

  // Solve tri(1, diag, 1) x = d (no wraparound) by the Thomas algorithm.
  static std::vector<double> thomas(std::vector<double> diag, std::vector<double> d) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
      const double w = 1.0 / diag[i - 1];
      diag[i] -= w;
      d[i] -= w * d[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = d[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (d[i] - x[i + 1]) / diag[i];
    return x;
  }

  void build_spline() {
    const std::size_t n = disp_.size();
    const double h = kTwoPi / static_cast<double>(n);
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ym = disp_[(i + n - 1) % n], y0 = disp_[i], yp = disp_[(i + 1) % n];
      rhs[i] = 6.0 * (yp - 2.0 * y0 + ym) / (h * h);
    }
    // Cyclic tridiagonal tri(1,4,1) with corner entries, solved by
    // Sherman-Morrison: M = M' + u v^T, u = (g,0,..,0,1), v = (1,0,..,0,1/g).
    const double g = -4.0;
    std::vector<double> diag(n, 4.0);
    diag[0] = 4.0 - g;
    diag[n - 1] = 4.0 - 1.0 / g;
    std::vector<double> u(n, 0.0);
    u[0] = g;
    u[n - 1] = 1.0;
    const std::vector<double> y = thomas(diag, rhs);
    const std::vector<double> z = thomas(diag, u);
    const double vy = y[0] + y[n - 1] / g;
    const double vz = z[0] + z[n - 1] / g;
    m2_.resize(n);
    const double f = vy / (1.0 + vz);
    for (std::size_t i = 0; i < n; ++i) m2_[i] = y[i] - f * z[i];
    max_disp_ = 0.0;
    for (double d : disp_) max_disp_ = std::max(max_disp_, std::abs(d));
  }

  double spline_eval(double s, int deriv) const {
    const std::size_t n = disp_.size();
    const double h = kTwoPi / static_cast<double>(n);
    double sr = wrap_angle(s);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(sr / h), n - 1);
    const double t = sr - h * static_cast<double>(i);
    const double y0 = disp_[i], y1 = disp_[(i + 1) % n];
    const double m0 = m2_[i], m1 = m2_[(i + 1) % n];
    const double A = (h - t), B = t;
    switch (deriv) {
      case 0:
        return (m0 * A * A * A + m1 * B * B * B) / (6.0 * h) + (y0 / h - m0 * h / 6.0) * A +
               (y1 / h - m1 * h / 6.0) * B;
      case 1:
        return (-m0 * A * A + m1 * B * B) / (2.0 * h) - (y0 / h - m0 * h / 6.0) +
               (y1 / h - m1 * h / 6.0);
      default:
        return (m0 * A + m1 * B) / h;
    }
  }

  void validate_monotone() {
    for (int i = 0; i < 4096; ++i) {
      const double s = kTwoPi * i / 4096.0;
      if (dchi(s) <= 0.0) throw ConfigError("CircleMap: chi' must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Model domain

struct Layered1DSpec {
  std::vector<double> lengths;    // L_i > 0
  std::vector<double> stiffness;  // p_i > 0
  std::vector<double> b;          // interface weights, size n-1, all > 0
  EndCondition left = EndCondition::Dirichlet;
  EndCondition right = EndCondition::Dirichlet;
};

struct ModelDomain {
  ModelVariant variant = ModelVariant::Hemispheres;

  // Layered1D
  Layered1DSpec layered;
  std::vector<double> cumulative;  // X_0=0, X_1, ..., X_n

  // GluedDisks
  CircleMap chi;

  // Hemispheres
  double c_plus = 1.0, c_minus = 1.0;

  double grazing_tol = kGrazingTol;
  double corner_tol = kCornerTol;
  // Chart positions on Y declared singular (none for the idealized models).
  std::vector<double> singular_points;

  static ModelDomain layered1d(Layered1DSpec spec) {
    ModelDomain m;
    m.variant = ModelVariant::Layered1D;
    const std::size_t n = spec.lengths.size();
    if (n == 0 || spec.stiffness.size() != n)
      throw ConfigError("layered1d: lengths/stiffness size mismatch");
    if (spec.b.size() != n - 1) throw ConfigError("layered1d: need one b per interior interface");
    for (double L : spec.lengths)
      if (!(L > 0.0)) throw ConfigError("layered1d: lengths must be positive");
    for (double p : spec.stiffness)
      if (!(p > 0.0)) throw ConfigError("layered1d: stiffness must be positive");
    for (double b : spec.b)
      if (!(b > 0.0)) throw ConfigError("layered1d: b must be positive");
    m.layered = std::move(spec);
    m.cumulative.assign(1, 0.0);
    for (double L : m.layered.lengths) m.cumulative.push_back(m.cumulative.back() + L);
    return m;
  }

  static ModelDomain glued_disks(CircleMap map) {
    ModelDomain m;
    m.variant = ModelVariant::GluedDisks;
    m.chi = std::move(map);
    return m;
  }

  static ModelDomain hemispheres(double cp, double cm) {
    if (!(cp > 0.0) || !(cm > 0.0)) throw ConfigError("hemispheres: c_+/c_- must be positive");
    ModelDomain m;
    m.variant = ModelVariant::Hemispheres;
    m.c_plus = cp;
    m.c_minus = cm;
    return m;
  }

  int layer_count() const { return static_cast<int>(layered.lengths.size()); }
  double total_length() const { return cumulative.back(); }
  double hemisphere_scale(int region) const { return region == 0 ? c_plus : c_minus; }

  // 1D optical length sum L_i p_i^{-1/2}
  double optical_length() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < layered.lengths.size(); ++i)
      acc += layered.lengths[i] / std::sqrt(layered.stiffness[i]);
    return acc;
  }
};

// ---------------------------------------------------------------------------
// Phase points

struct PhasePoint {
  int region = 0;
  double x[2] = {0.0, 0.0};   // chart position
  double xi[2] = {0.0, 0.0};  // chart covector
  bool on_shell = true;
};

// Cometric quadratic form g_region(x, xi).
inline double cometric(const ModelDomain& m, const PhasePoint& p) {
  switch (m.variant) {
    case ModelVariant::Layered1D:
      return m.layered.stiffness[p.region] * p.xi[0] * p.xi[0];
    case ModelVariant::GluedDisks:
      return p.xi[0] * p.xi[0] + p.xi[1] * p.xi[1];
    default: {
      const double c = m.hemisphere_scale(p.region);
      const double st = std::sin(p.x[1]);
      const double gphi = (st == 0.0) ? 0.0 : p.xi[0] * p.xi[0] / (st * st);
      return (gphi + p.xi[1] * p.xi[1]) / (c * c);
    }
  }
}

inline PhasePoint normalize_on_shell(const ModelDomain& m, PhasePoint p) {
  const double g = cometric(m, p);
  if (!(g > 0.0)) throw NumericDegeneracy("normalize_on_shell: zero covector");
  const double s = 1.0 / std::sqrt(g);
  p.xi[0] *= s;
  p.xi[1] *= s;
  p.on_shell = true;
  return p;
}

// --- Hemisphere chart <-> 3D helpers ---------------------------------------

struct SpherePos {
  Vec3 pos;  // unit vector
  Vec3 vel;  // unit tangent, velocity in the standard-round parametrization
};

inline SpherePos hemi_to_3d(const ModelDomain& m, const PhasePoint& p) {
  const double phi = p.x[0], th = p.x[1];
  const double c = m.hemisphere_scale(p.region);
  const Vec3 P{std::sin(th) * std::cos(phi), std::sin(th) * std::sin(phi), std::cos(th)};
  const Vec3 eth{std::cos(th) * std::cos(phi), std::cos(th) * std::sin(phi), -std::sin(th)};
  const Vec3 eph{-std::sin(phi), std::cos(phi), 0.0};
  const double st = std::sin(th);
  // xi_theta = c (V.e_theta), xi_phi = c (V.e_phi) sin(theta)
  const double vth = p.xi[1] / c;
  const double vph = (st == 0.0) ? 0.0 : p.xi[0] / (c * st);
  return {P, eth * vth + eph * vph};
}

inline PhasePoint hemi_from_3d(const ModelDomain& m, int region, const Vec3& P, const Vec3& V) {
  PhasePoint p;
  p.region = region;
  const double c = m.hemisphere_scale(region);
  const double th = std::acos(std::clamp(P.z, -1.0, 1.0));
  double phi;
  const double rho = std::hypot(P.x, P.y);
  if (rho > 1e-14) {
    phi = wrap_angle(std::atan2(P.y, P.x));
  } else {
    // pole: choose the longitude so that V = sign * e_theta
    phi = wrap_angle(std::atan2(P.z > 0 ? V.y : -V.y, P.z > 0 ? V.x : -V.x));
  }
  const Vec3 eth{std::cos(th) * std::cos(phi), std::cos(th) * std::sin(phi), -std::sin(th)};
  const Vec3 eph{-std::sin(phi), std::cos(phi), 0.0};
  p.x[0] = phi;
  p.x[1] = th;
  p.xi[1] = c * dot(V, eth);
  p.xi[0] = c * dot(V, eph) * std::sin(th);
  p.on_shell = true;
  return p;
}

// ---------------------------------------------------------------------------
// Interface hits

enum class HitKind { Transmissible, TotalReflection, Grazing, Singular, OuterBoundary };

struct InterfaceHit {
  HitKind kind = HitKind::Transmissible;
  int from_region = 0;
  double time = 0.0;    // flight time from the emitting point
  PhasePoint incoming;  // boundary limit of the incoming trajectory (on-shell)

  double y_chart = 0.0;     // s on dD+ / longitude / 1D position
  int boundary_index = 0;   // 1D interface index; -1 left end, -2 right end
  bool outer = false;       // outer boundary (1D ends only)

  double eta = 0.0;         // tangential covector functional (common chart on Y)
  double g_self = 0.0;      // tangential cometric norm^2 on the approach side
  double g_other = 0.0;     // same on the far side
  double tau_plus = 1.0;    // unit conormal component, approach side
  double tau_minus = 0.0;   // far-side conormal component when transmissible
  double tau_tilde_minus = 0.0;  // sqrt|1 - g_other| at total reflection

  double u_self = 0.0;      // tangential momentum in the approach-side local chart
  double u_other = 0.0;     // tangential momentum in the far-side local chart

  Vec3 pos3, vel3;          // hemispheres only: 3D limit data
};

// psi(s) = 1 / chi'(chi^{-1}(s)) -- density of the minus-side boundary
// arclength in the s chart.
inline double disks_psi(const ModelDomain& m, double s) {
  return 1.0 / m.chi.dchi(m.chi.inverse(s));
}

// Raw boundary intersection produced by free_flight, before classification.
struct RawHit {
  int from_region = 0;
  double time = 0.0;
  PhasePoint incoming;   // on-shell limit at the boundary
  double y_chart = 0.0;
  int boundary_index = 0;
  bool outer = false;
  Vec3 pos3, vel3;
};

// classify_hit fills the tangential/conormal data and the classification.
// Classification is total: every raw hit maps to some HitKind.
inline InterfaceHit classify_hit(const ModelDomain& m, const RawHit& raw) {
  InterfaceHit h;
  h.from_region = raw.from_region;
  h.time = raw.time;
  h.incoming = raw.incoming;
  h.y_chart = raw.y_chart;
  h.boundary_index = raw.boundary_index;
  h.outer = raw.outer;
  h.pos3 = raw.pos3;
  h.vel3 = raw.vel3;

  if (!h.outer) {
    for (double sp : m.singular_points) {
      const double d = (m.variant == ModelVariant::Layered1D) ? std::abs(h.y_chart - sp)
                                                              : std::abs(circ_diff(h.y_chart, sp));
      if (d < m.corner_tol) {
        h.kind = HitKind::Singular;
        return h;
      }
    }
  }

  switch (m.variant) {
    case ModelVariant::Layered1D: {
      if (raw.outer) {
        h.kind = HitKind::OuterBoundary;
        h.tau_plus = 1.0;
        return h;
      }
      h.eta = 0.0;
      h.g_self = h.g_other = 0.0;
      h.tau_plus = 1.0;
      h.tau_minus = 1.0;
      h.u_self = h.u_other = 0.0;
      h.kind = HitKind::Transmissible;
      return h;
    }
    case ModelVariant::GluedDisks: {
      const PhasePoint& q = raw.incoming;
      const Vec2 pos{q.x[0], q.x[1]};
      const Vec2 xi{q.xi[0], q.xi[1]};
      const double u_local = cross(pos, xi);  // tangential momentum, own chart
      h.u_self = u_local;
      double s, psi;
      if (raw.from_region == 0) {
        s = raw.y_chart;
        psi = disks_psi(m, s);
        h.eta = u_local;          // h_+ = 1 in the s chart
        h.u_other = h.eta / psi;  // minus-side chart momentum
      } else {
        const double sigma = raw.y_chart;
        s = wrap_angle(m.chi.chi(sigma));
        psi = 1.0 / m.chi.dchi(sigma);
        h.eta = u_local * psi;    // eta ds = u dsigma
        h.u_other = h.eta;        // plus-side chart momentum
      }
      h.g_self = u_local * u_local;
      h.g_other = h.u_other * h.u_other;
      break;
    }
    default: {  // Hemispheres
      const double c_self = m.hemisphere_scale(raw.from_region);
      const double c_other = m.hemisphere_scale(1 - raw.from_region);
      const Vec3 eph{-std::sin(raw.y_chart), std::cos(raw.y_chart), 0.0};
      h.eta = c_self * dot(raw.vel3, eph);  // xi_phi at the equator
      h.u_self = h.eta / c_self;
      h.u_other = h.eta / c_other;
      h.g_self = h.u_self * h.u_self;
      h.g_other = h.u_other * h.u_other;
      break;
    }
  }

  const double t2p = 1.0 - h.g_self;
  h.tau_plus = t2p > 0.0 ? std::sqrt(t2p) : 0.0;
  if (h.tau_plus < m.grazing_tol) {
    h.kind = HitKind::Grazing;
    return h;
  }
  if (h.g_other < 1.0) {
    h.tau_minus = std::sqrt(1.0 - h.g_other);
    if (h.tau_minus < m.grazing_tol) {
      h.kind = HitKind::Grazing;  // zero refraction angle
      return h;
    }
    h.kind = HitKind::Transmissible;
  } else {
    h.tau_tilde_minus = std::sqrt(h.g_other - 1.0);
    h.kind = HitKind::TotalReflection;
  }
  return h;
}

// Builds the InterfaceHit of a trajectory sitting on the boundary of its
// region with the covector pointing out of the region (hit time 0). Used to
// probe the splitting laws directly with synthetic boundary states.
inline InterfaceHit hit_from_boundary_point(const ModelDomain& m, const PhasePoint& p_in) {
  const PhasePoint p = normalize_on_shell(m, p_in);
  RawHit raw;
  raw.from_region = p.region;
  raw.time = 0.0;
  raw.incoming = p;
  switch (m.variant) {
    case ModelVariant::Layered1D: {
      const double target = p.xi[0] > 0.0 ? m.cumulative[p.region + 1] : m.cumulative[p.region];
      if (std::abs(p.x[0] - target) > 1e-9)
        throw NumericDegeneracy("hit_from_boundary_point: not on the outgoing boundary");
      raw.y_chart = target;
      const bool left_end = (p.xi[0] < 0.0 && p.region == 0);
      const bool right_end = (p.xi[0] > 0.0 && p.region == m.layer_count() - 1);
      raw.outer = left_end || right_end;
      raw.boundary_index = raw.outer ? (left_end ? -1 : -2)
                                     : (p.xi[0] > 0.0 ? p.region : p.region - 1);
      break;
    }
    case ModelVariant::GluedDisks: {
      const Vec2 pos{p.x[0], p.x[1]};
      const Vec2 d{p.xi[0], p.xi[1]};
      if (std::abs(norm(pos) - 1.0) > 1e-9 || dot(pos, d) <= 0.0)
        throw NumericDegeneracy("hit_from_boundary_point: not on the rim moving outward");
      raw.y_chart = wrap_angle(std::atan2(pos.y, pos.x));
      break;
    }
    default: {
      const SpherePos sp = hemi_to_3d(m, p);
      if (std::abs(sp.pos.z) > 1e-9)
        throw NumericDegeneracy("hit_from_boundary_point: not on the equator");
      const bool outward = (p.region == 0) ? sp.vel.z < 0.0 : sp.vel.z > 0.0;
      if (!outward) throw NumericDegeneracy("hit_from_boundary_point: moving inward");
      raw.pos3 = {sp.pos.x, sp.pos.y, 0.0};
      raw.vel3 = sp.vel;
      raw.y_chart = wrap_angle(std::atan2(sp.pos.y, sp.pos.x));
      break;
    }
  }
  return classify_hit(m, raw);
}

// ---------------------------------------------------------------------------
// Geodesic path descriptors (evaluate the flight at intermediate times)

struct GeodesicPath {
  ModelVariant variant = ModelVariant::Layered1D;
  int region = 0;
  double duration = 0.0;
  // 1D
  double x0 = 0.0, speed = 0.0, xi0 = 0.0;
  // disks
  Vec2 p0, dir;
  // hemispheres
  Vec3 P, V;
  double scale = 1.0;

  PhasePoint eval(const ModelDomain& m, double t) const {
    PhasePoint q;
    q.region = region;
    switch (variant) {
      case ModelVariant::Layered1D:
        q.x[0] = x0 + speed * t;
        q.xi[0] = xi0;
        q.on_shell = true;
        return q;
      case ModelVariant::GluedDisks: {
        const Vec2 p = p0 + t * dir;
        q.x[0] = p.x;
        q.x[1] = p.y;
        q.xi[0] = dir.x;
        q.xi[1] = dir.y;
        q.on_shell = true;
        return q;
      }
      default: {
        const double a = t / scale;
        const Vec3 pos = P * std::cos(a) + V * std::sin(a);
        const Vec3 vel = V * std::cos(a) - P * std::sin(a);
        return hemi_from_3d(m, region, pos, vel);
      }
    }
  }
};

struct Flight {
  InterfaceHit hit;
  double time = 0.0;
  GeodesicPath path;
};

namespace detail {

inline Flight free_flight_1d(const ModelDomain& m, const PhasePoint& p) {
  const int i = p.region;
  const double sp = std::sqrt(m.layered.stiffness[i]);
  const double sgn = p.xi[0] > 0.0 ? 1.0 : -1.0;
  const double lo = m.cumulative[i], hi = m.cumulative[i + 1];
  if (p.x[0] < lo - 1e-12 || p.x[0] > hi + 1e-12)
    throw NumericDegeneracy("free_flight: point outside its labeled layer");
  const double target = sgn > 0.0 ? hi : lo;
  const double dist = std::abs(target - p.x[0]);
  if (dist < 1e-14) throw NumericDegeneracy("free_flight: start on the boundary");
  RawHit raw;
  raw.from_region = i;
  raw.time = dist / sp;
  raw.y_chart = target;
  const bool left_end = (sgn < 0.0 && i == 0);
  const bool right_end = (sgn > 0.0 && i == m.layer_count() - 1);
  raw.outer = left_end || right_end;
  raw.boundary_index = raw.outer ? (left_end ? -1 : -2) : (sgn > 0.0 ? i : i - 1);
  raw.incoming.region = i;
  raw.incoming.x[0] = target;
  raw.incoming.xi[0] = sgn / sp;
  raw.incoming.on_shell = true;

  Flight f;
  f.hit = classify_hit(m, raw);
  f.time = raw.time;
  f.path.variant = ModelVariant::Layered1D;
  f.path.region = i;
  f.path.duration = raw.time;
  f.path.x0 = p.x[0];
  f.path.speed = sgn * sp;
  f.path.xi0 = sgn / sp;
  return f;
}

inline Flight free_flight_disks(const ModelDomain& m, const PhasePoint& p) {
  const Vec2 pos{p.x[0], p.x[1]};
  const Vec2 dir{p.xi[0], p.xi[1]};  // Euclid: covector == direction on-shell
  const double b = dot(pos, dir);
  const double c = dot(pos, pos) - 1.0;
  if (c > 1e-12) throw NumericDegeneracy("free_flight: point outside the disk");
  const double disc = b * b - c;
  if (disc <= 0.0) throw NumericDegeneracy("free_flight: degenerate chord");
  const double t = -b + std::sqrt(disc);
  if (t < 1e-14) throw NumericDegeneracy("free_flight: start on the rim moving outward");
  const Vec2 q = pos + t * dir;
  RawHit raw;
  raw.from_region = p.region;
  raw.time = t;
  raw.y_chart = wrap_angle(std::atan2(q.y, q.x));
  raw.incoming.region = p.region;
  raw.incoming.x[0] = q.x;
  raw.incoming.x[1] = q.y;
  raw.incoming.xi[0] = dir.x;
  raw.incoming.xi[1] = dir.y;
  raw.incoming.on_shell = true;

  Flight f;
  f.hit = classify_hit(m, raw);
  f.time = t;
  f.path.variant = ModelVariant::GluedDisks;
  f.path.region = p.region;
  f.path.duration = t;
  f.path.p0 = pos;
  f.path.dir = dir;
  return f;
}

inline Flight free_flight_hemis(const ModelDomain& m, const PhasePoint& p) {
  const SpherePos sp = hemi_to_3d(m, p);
  const double c = m.hemisphere_scale(p.region);
  const double Pz = sp.pos.z, Vz = sp.vel.z;
  const double amp = std::hypot(Pz, Vz);
  if (amp < 1e-13) throw NumericDegeneracy("free_flight: tangential equator ray");
  const double into = (p.region == 0) ? 1.0 : -1.0;
  if (into * Pz < -1e-12 || (std::abs(Pz) <= 1e-12 && into * Vz <= 0.0))
    throw NumericDegeneracy("free_flight: point not inside its labeled hemisphere");
  // z(a) = Pz cos a + Vz sin a = amp * cos(a - a0); zeros at a0 + pi/2 + k pi
  const double a0 = std::atan2(Vz, Pz);
  double a = a0 + kPi / 2.0;
  while (a <= 1e-12) a += kPi;
  while (a - kPi > 1e-12) a -= kPi;
  const Vec3 q = sp.pos * std::cos(a) + sp.vel * std::sin(a);
  const Vec3 v = sp.vel * std::cos(a) - sp.pos * std::sin(a);

  RawHit raw;
  raw.from_region = p.region;
  raw.time = c * a;
  raw.y_chart = wrap_angle(std::atan2(q.y, q.x));
  raw.pos3 = {q.x, q.y, 0.0};  // land exactly on the equator
  raw.vel3 = v;
  raw.incoming = hemi_from_3d(m, p.region, raw.pos3, v);

  Flight f;
  f.hit = classify_hit(m, raw);
  f.time = raw.time;
  f.path.variant = ModelVariant::Hemispheres;
  f.path.region = p.region;
  f.path.duration = raw.time;
  f.path.P = sp.pos;
  f.path.V = sp.vel;
  f.path.scale = c;
  return f;
}

}  // namespace detail

// First forward intersection of the geodesic through p with the region
// boundary. Accepts any positive multiple of an on-shell covector (the
// Hamiltonian sqrt(g) flow is invariant under covector scaling).
inline Flight free_flight(const ModelDomain& m, const PhasePoint& p_in) {
  const PhasePoint p = normalize_on_shell(m, p_in);
  switch (m.variant) {
    case ModelVariant::Layered1D: return detail::free_flight_1d(m, p);
    case ModelVariant::GluedDisks: return detail::free_flight_disks(m, p);
    default: return detail::free_flight_hemis(m, p);
  }
}

}  // namespace raysplit
