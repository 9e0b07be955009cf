#pragma once

// Geometric-optics splitting at interface and boundary hits: reflected and
// refracted covectors, the amplitude coefficients of the splitting lemma and
// the induced boundary density ratio b.
//
// Unit conormal convention: conormals are oriented inward into the side of
// travel, so the reflected covector keeps the tangential component and flips
// the conormal one. A discrepancy with the opposite convention would flip
// only the sign of the reflected amplitude; the 1D spectral cross-check pins
// the sign used here.

#include <cmath>
#include <optional>

#include "raysplit/common.hpp"
#include "raysplit/geometry.hpp"

namespace raysplit {

enum class SplitKind { TwoWay, TotalReflection, OuterBoundaryReflection };

struct SplitOutcome {
  SplitKind kind = SplitKind::TwoWay;
  PhasePoint reflected;
  cplx reflected_amp{1.0, 0.0};
  std::optional<PhasePoint> refracted;
  double refracted_amp = 0.0;
  double b_used = 1.0;
};

// Ratio of the induced boundary densities at the hit location, as seen from
// the approach side (paper: h(x) = b(x) * deck(h)(x)). For Layered1D the
// geometric ratio is identically 1; the configured interface weight is
// returned instead (see the spectral calibration).
inline double boundary_density_ratio(const ModelDomain& m, const InterfaceHit& h) {
  switch (m.variant) {
    case ModelVariant::Layered1D:
      return m.layered.b.at(static_cast<std::size_t>(h.boundary_index));
    case ModelVariant::GluedDisks: {
      if (h.from_region == 0) return 1.0 / disks_psi(m, h.y_chart);
      return 1.0 / m.chi.dchi(h.y_chart);  // equals psi(s) seen from the minus side
    }
    default:
      return h.from_region == 0 ? m.c_plus / m.c_minus : m.c_minus / m.c_plus;
  }
}

inline PhasePoint reflect_covector(const ModelDomain& m, const InterfaceHit& h) {
  if (h.kind == HitKind::Grazing || h.kind == HitKind::Singular)
    throw GrazingInput("reflect_covector: grazing/singular hit");
  switch (m.variant) {
    case ModelVariant::Layered1D: {
      PhasePoint p = h.incoming;
      p.xi[0] = -p.xi[0];
      return p;
    }
    case ModelVariant::GluedDisks: {
      const Vec2 q{h.incoming.x[0], h.incoming.x[1]};
      const Vec2 d{h.incoming.xi[0], h.incoming.xi[1]};
      const Vec2 r = d - (2.0 * dot(d, q)) * q;  // outward normal is q on the unit circle
      PhasePoint p = h.incoming;
      p.xi[0] = r.x;
      p.xi[1] = r.y;
      return p;
    }
    default: {
      Vec3 v = h.vel3;
      v.z = -v.z;
      return hemi_from_3d(m, h.from_region, h.pos3, v);
    }
  }
}

inline PhasePoint refract_covector(const ModelDomain& m, const InterfaceHit& h) {
  if (h.kind == HitKind::Grazing || h.kind == HitKind::Singular || h.outer)
    throw GrazingInput("refract_covector: no refracted branch at this hit");
  if (h.g_other >= 1.0) throw TotalReflectionInput("refract_covector: total reflection");
  const int to = 1 - h.from_region;  // two-region models
  switch (m.variant) {
    case ModelVariant::Layered1D: {
      // interface h.boundary_index separates layers i and i+1
      const int layer_to = (h.from_region == h.boundary_index) ? h.boundary_index + 1
                                                               : h.boundary_index;
      PhasePoint p;
      p.region = layer_to;
      p.x[0] = h.incoming.x[0];
      const double sgn = h.incoming.xi[0] > 0.0 ? 1.0 : -1.0;
      p.xi[0] = sgn / std::sqrt(m.layered.stiffness[layer_to]);
      p.on_shell = true;
      return p;
    }
    case ModelVariant::GluedDisks: {
      // Tangential functional eta is transported through chi; the far-side
      // chart momentum was already computed by classify_hit.
      const double a_other = (h.from_region == 0) ? m.chi.inverse(h.y_chart)
                                                  : m.chi.chi(h.y_chart);
      const double aw = wrap_angle(a_other);
      const Vec2 Q{std::cos(aw), std::sin(aw)};
      const Vec2 T{-std::sin(aw), std::cos(aw)};
      const double nu = std::sqrt(1.0 - h.u_other * h.u_other);
      const Vec2 d = h.u_other * T - nu * Q;  // inward into the far disk
      PhasePoint p;
      p.region = to;
      p.x[0] = Q.x;
      p.x[1] = Q.y;
      p.xi[0] = d.x;
      p.xi[1] = d.y;
      p.on_shell = true;
      return p;
    }
    default: {
      const double c_to = m.hemisphere_scale(to);
      const double vph = h.eta / c_to;  // std-sphere tangential velocity component
      const double vz = (to == 0 ? 1.0 : -1.0) * std::sqrt(1.0 - vph * vph);
      const Vec3 eph{-std::sin(h.y_chart), std::cos(h.y_chart), 0.0};
      const Vec3 v = vph * eph + Vec3{0.0, 0.0, vz};
      return hemi_from_3d(m, to, h.pos3, v);
    }
  }
}

// Case (i) of the splitting lemma: real reflected/refracted amplitudes.
struct LemmaCoefficients {
  double reflected = 0.0;
  double refracted = 0.0;
};

inline LemmaCoefficients lemma_two_way(double b, double tau_plus, double tau_minus) {
  const double bt = b * tau_plus;
  return {(bt - tau_minus) / (bt + tau_minus), 2.0 * std::sqrt(bt * tau_minus) / (bt + tau_minus)};
}

// Case (ii): unit-modulus reflected amplitude at total reflection, principal
// argument in (-pi, pi].
inline cplx lemma_total_reflection(double b, double tau_plus, double tau_tilde_minus) {
  const double bt = b * tau_plus;
  return cplx{bt, -tau_tilde_minus} / cplx{bt, tau_tilde_minus};
}

// Amplitude coefficients of the splitting lemma. b must be the density ratio
// as seen from the approach side (use 1/b when approaching from the other
// side; boundary_density_ratio already does this).
inline SplitOutcome split_amplitudes(const ModelDomain& m, const InterfaceHit& h, double b) {
  if (h.kind == HitKind::Grazing || h.kind == HitKind::Singular)
    throw GrazingInput("split_amplitudes: grazing/singular hit");
  SplitOutcome out;
  out.b_used = b;
  out.reflected = reflect_covector(m, h);
  if (h.kind == HitKind::OuterBoundary) {
    out.kind = SplitKind::OuterBoundaryReflection;
    const EndCondition ec = (h.boundary_index == -1) ? m.layered.left : m.layered.right;
    out.reflected_amp = (ec == EndCondition::Dirichlet) ? cplx{-1.0, 0.0} : cplx{1.0, 0.0};
    return out;
  }
  if (h.kind == HitKind::Transmissible) {
    out.kind = SplitKind::TwoWay;
    const LemmaCoefficients lc = lemma_two_way(b, h.tau_plus, h.tau_minus);
    out.reflected_amp = cplx{lc.reflected, 0.0};
    out.refracted_amp = lc.refracted;
    out.refracted = refract_covector(m, h);
    return out;
  }
  out.kind = SplitKind::TotalReflection;
  out.reflected_amp = lemma_total_reflection(b, h.tau_plus, h.tau_tilde_minus);
  return out;
}

// Convenience: classify-consistent split with the model's own density ratio.
inline SplitOutcome split_at(const ModelDomain& m, const InterfaceHit& h) {
  const double b = h.outer ? 1.0 : boundary_density_ratio(m, h);
  return split_amplitudes(m, h, b);
}

}  // namespace raysplit
