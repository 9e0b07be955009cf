#pragma once

// Test-only oracles, kept independent of the library code paths they check:
//  - RK4 integration of Hamilton's equations for H = sqrt(p xi^2) in 1D
//  - plane-wave transfer-matrix scattering at a single 1D interface
//  - a pencil-envelope locator for conjugate points in the flat disk

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "raysplit/common.hpp"

namespace oracles {

// --- Hamilton's equations for H = sqrt(p(x) xi^2), p piecewise constant ----
// Integrates within one layer (constant p); returns x(t).
inline double hamilton_rk4_position(double p_stiff, double x0, double xi0, double t, int steps) {
  auto xdot = [&](double xi) {
    const double H = std::sqrt(p_stiff * xi * xi);
    return p_stiff * xi / H;  // dH/dxi
  };
  double x = x0, xi = xi0;
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    // xi is constant within a layer (dH/dx = 0), so this reduces to x updates
    const double k1 = xdot(xi);
    const double k2 = xdot(xi);
    const double k3 = xdot(xi);
    const double k4 = xdot(xi);
    x += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0;
  }
  return x;
}

// --- plane-wave scattering at one interface ---------------------------------
// Left medium p1, right medium p2, interface at x = 0, matching conditions
// f continuous and f' jump f'(0+) = gamma f'(0-). For the standard
// Sturm-Liouville realization (p f' continuous) gamma = p1/p2.
struct PlaneWave {
  std::complex<double> R;  // reflection amplitude (incoming from the left)
  std::complex<double> T;  // transmission amplitude
  double flux_defect;      // |R|^2 + (p2 k2)/(p1 k1) |T|^2 - 1
};

inline PlaneWave plane_wave_interface(double p1, double p2, double omega, double gamma) {
  const double k1 = omega / std::sqrt(p1), k2 = omega / std::sqrt(p2);
  // f1 = e^{i k1 x} + R e^{-i k1 x}; f2 = T e^{i k2 x}
  // continuity: 1 + R = T ; derivative: gamma * i k1 (1 - R) = i k2 T
  const std::complex<double> one{1.0, 0.0};
  const std::complex<double> R = (gamma * k1 - k2) / (gamma * k1 + k2) * one;
  const std::complex<double> T = one + R;
  PlaneWave out;
  out.R = R;
  out.T = T;
  // conserved current J_i = w_i p_i Im(conj(f) f') with w_2/w_1 = p1/(gamma p2)
  const double w_ratio = p1 / (gamma * p2);
  out.flux_defect = std::norm(R) + w_ratio * (p2 * k2) / (p1 * k1) * std::norm(T) - 1.0;
  return out;
}

// --- envelope (conjugate point) of a ray pencil in the flat disk -----------
// Propagates a fan of rays from a common start point through `bounces`
// specular reflections in the unit circle and locates the first envelope
// crossing after the last bounce by nearest-ray distance minimization.
struct PencilRay {
  raysplit::Vec2 pos;
  raysplit::Vec2 dir;
};

inline PencilRay trace_disk_ray(raysplit::Vec2 p, raysplit::Vec2 d, int bounces) {
  using raysplit::dot;
  for (int b = 0; b < bounces; ++b) {
    const double bb = dot(p, d), cc = dot(p, p) - 1.0;
    const double t = -bb + std::sqrt(bb * bb - cc);
    p = p + t * d;
    d = d - 2.0 * dot(d, p) * p;  // reflect at the unit circle (normal = p)
  }
  return {p, d};
}

// Distance along the central ray (after the final bounce) at which the
// neighbouring pencil ray crosses it.
inline double disk_pencil_envelope(raysplit::Vec2 p0, double angle0, int bounces, double dtheta) {
  const PencilRay c = trace_disk_ray(p0, {std::cos(angle0), std::sin(angle0)}, bounces);
  const PencilRay n =
      trace_disk_ray(p0, {std::cos(angle0 + dtheta), std::sin(angle0 + dtheta)}, bounces);
  // Solve c.pos + s c.dir = n.pos + r n.dir for s (Cramer).
  const double det = raysplit::cross(n.dir, c.dir);
  const raysplit::Vec2 rhs = c.pos - n.pos;
  return raysplit::cross(rhs, n.dir) / det;
}

}  // namespace oracles
