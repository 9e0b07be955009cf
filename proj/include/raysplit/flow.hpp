#pragma once

// Event-driven propagation of branching trajectories. A branch carries its
// cumulative complex amplitude tau_kappa, the kappa event code, the Maslov
// counter Theta (minus the number of conjugate points) and a 2x2 transverse
// Jacobi matrix propagated analytically through flights and events.
//
// Conjugate points are zeros of the (1,2) entry of the cumulative Jacobi
// matrix (the pencil that varies the initial direction at a fixed start
// point). A zero that lands on an event time within 1e-9 is counted at the
// event and flagged degenerate; flight intervals are closed on the left and
// open on the right, so nothing is counted twice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "raysplit/common.hpp"
#include "raysplit/geometry.hpp"
#include "raysplit/snell.hpp"

namespace raysplit {

enum class LostReason { Grazing, Singular, Pruned };

struct PrunePolicy {
  double eps_amp = 1e-6;            // prune when |amp|^2 falls below this
  std::size_t max_branches = 1u << 16;
  int max_events = 64;
  bool record_events = false;       // keep per-event rows for trajectory dumps
};

struct BranchState {
  PhasePoint point;
  double t = 0.0;
  cplx amp{1.0, 0.0};
  long long theta = 0;
  std::string kappa;
  Mat2 jacobi;
  bool alive = true;
  std::optional<LostReason> lost_reason;
  int events = 0;
  int degenerate_events = 0;  // conjugate points coinciding with event times
  int id = 0;
  int parent = -1;
};

struct EventRecord {
  int branch_id = 0;
  int parent_id = -1;
  double t = 0.0;
  int region = 0;
  double x[2] = {0, 0};
  double xi[2] = {0, 0};
  cplx amp{1.0, 0.0};
  long long theta = 0;
  char kappa_digit = '-';
  char event_kind = '-';  // T split, R total reflection, O outer, G grazing,
                          // S singular, P pruned, B budget stop
};

struct PruneLogEntry {
  int branch_id = 0;
  double t = 0.0;
  double mass = 0.0;
};

struct BranchTree {
  PhasePoint root;
  double horizon = 0.0;
  std::vector<BranchState> branches;
  double lost_mass = 0.0;
  std::vector<PruneLogEntry> prune_log;
  bool budget_exceeded = false;
  std::vector<EventRecord> events;
};

inline BranchTree make_tree(const ModelDomain& m, const PhasePoint& start) {
  BranchTree tree;
  tree.root = normalize_on_shell(m, start);
  BranchState b;
  b.point = tree.root;
  b.id = 0;
  tree.branches.push_back(b);
  return tree;
}

inline double alive_mass(const BranchTree& tree) {
  double acc = 0.0;
  for (const auto& b : tree.branches)
    if (b.alive) acc += std::norm(b.amp);
  return acc;
}

// ---------------------------------------------------------------------------
// Jacobi propagation

namespace detail {

struct FlightJacobi {
  Mat2 after;
  int interior_zeros = 0;
  bool zero_at_end = false;
};

inline constexpr double kZeroStartTol = 1e-12;  // zeros this close to the
                                                // segment start belong to the
                                                // previous event
inline constexpr double kZeroEventTol = 1e-9;

// Flat flight: (J, J') -> (J + dt J', J').
inline FlightJacobi jacobi_flat(const Mat2& M, double dt, bool ends_at_event) {
  FlightJacobi out;
  out.after = Mat2{1.0, dt, 0.0, 1.0} * M;
  const double B0 = M.b, D0 = M.d;
  if (D0 != 0.0) {
    const double z = -B0 / D0;
    if (ends_at_event && std::abs(z - dt) <= kZeroEventTol) {
      out.zero_at_end = true;
    } else if (z > kZeroStartTol && z < dt - kZeroEventTol) {
      out.interior_zeros = 1;
    } else if (!ends_at_event && z > kZeroStartTol && z <= dt) {
      out.interior_zeros = 1;  // zero in a horizon-truncated segment
    }
  }
  return out;
}

// Round-sphere flight with metric scale c over time dt (angle a = dt/c):
// J(a) = J0 cos a + c J0' sin a.
inline FlightJacobi jacobi_sphere(const Mat2& M, double dt, double c, bool ends_at_event) {
  FlightJacobi out;
  const double a_end = dt / c;
  const double ca = std::cos(a_end), sa = std::sin(a_end);
  out.after = Mat2{ca, c * sa, -sa / c, ca} * M;
  const double B0 = M.b, CD0 = c * M.d;
  if (std::abs(B0) < 1e-300 && std::abs(CD0) < 1e-300) return out;
  double zb = std::atan2(-B0, CD0);  // one zero of B0 cos a + CD0 sin a
  while (zb <= 0.0) zb += kPi;
  const double end_tol = kZeroEventTol / c;
  for (double z = zb; z <= a_end + end_tol; z += kPi) {
    if (z <= kZeroStartTol) continue;
    if (ends_at_event && std::abs(z - a_end) <= end_tol) {
      out.zero_at_end = true;
    } else if (z < a_end - (ends_at_event ? end_tol : 0.0)) {
      ++out.interior_zeros;
    } else if (!ends_at_event && z <= a_end) {
      ++out.interior_zeros;
    }
  }
  return out;
}

inline FlightJacobi jacobi_flight(const ModelDomain& m, const GeodesicPath& path, const Mat2& M,
                                  double dt, bool ends_at_event) {
  switch (m.variant) {
    case ModelVariant::Layered1D: {
      FlightJacobi out;  // no transverse directions in 1D
      out.after = M;
      return out;
    }
    case ModelVariant::GluedDisks: return jacobi_flat(M, dt, ends_at_event);
    default: return jacobi_sphere(M, dt, path.scale, ends_at_event);
  }
}

// Transfer of (J, J') through a reflection event.
inline Mat2 jacobi_reflect(const ModelDomain& m, const InterfaceHit& h) {
  switch (m.variant) {
    case ModelVariant::Layered1D: return Mat2::identity();
    case ModelVariant::GluedDisks:
      // unit-circle mirror, curvature 1, sine of the incidence angle tau_+
      return Mat2{-1.0, 0.0, 2.0 / h.tau_plus, -1.0};
    default: return Mat2{-1.0, 0.0, 0.0, -1.0};  // the equator is a geodesic
  }
}

// Transfer of (J, J') through a refraction event.
inline Mat2 jacobi_refract(const ModelDomain& m, const InterfaceHit& h) {
  switch (m.variant) {
    case ModelVariant::Layered1D: return Mat2::identity();
    case ModelVariant::GluedDisks: {
      const double sp_in = h.tau_plus, sp_out = h.tau_minus;
      if (h.from_region == 0) {
        const double s = h.y_chart;
        const double sigma = m.chi.inverse(s);
        const double psi = 1.0 / m.chi.dchi(sigma);
        const double dpsi = -m.chi.ddchi(sigma) * psi * psi * psi;  // d psi / d s
        const double eta = h.eta;
        // crossing data per unit (J, J'): ds = J/sp_in, deta = sp_in (J' - ds)
        const double ds_J = 1.0 / sp_in;
        const double deta_J = -1.0, deta_Jp = sp_in;
        const double dsig_J = psi * ds_J;
        // u_- = eta / psi
        const double dum_J = deta_J / psi - eta * dpsi * ds_J / (psi * psi);
        const double dum_Jp = deta_Jp / psi;
        Mat2 T;
        T.a = -sp_out * dsig_J;
        T.b = 0.0;
        T.c = dsig_J - dum_J / sp_out;
        T.d = -dum_Jp / sp_out;
        return T;
      }
      // approach from the minus side (own chart angle sigma)
      const double sigma = h.y_chart;
      const double s = m.chi.chi(sigma);
      const double psi = 1.0 / m.chi.dchi(sigma);
      const double dpsi_ds = -m.chi.ddchi(sigma) * psi * psi * psi;
      const double u_in = h.u_self;
      const double dsig_J = 1.0 / sp_in;
      const double duin_J = -1.0, duin_Jp = sp_in;
      const double ds_J = dsig_J / psi;
      (void)s;
      // eta = u_in * psi(s): deta = psi du_in + u_in psi'(s) ds
      const double deta_J = psi * duin_J + u_in * dpsi_ds * ds_J;
      const double deta_Jp = psi * duin_Jp;
      Mat2 T;
      T.a = -sp_out * ds_J;
      T.b = 0.0;
      T.c = ds_J - deta_J / sp_out;
      T.d = -deta_Jp / sp_out;
      return T;
    }
    default: {
      // Both hemispheres live in one 3D chart, so the transverse frame is
      // continuous across the equator: beam magnification, no sign flip.
      const double c_in = m.hemisphere_scale(h.from_region);
      const double c_out = m.hemisphere_scale(1 - h.from_region);
      const double mfac = (c_out * h.tau_minus) / (c_in * h.tau_plus);
      return Mat2{mfac, 0.0, 0.0, 1.0 / mfac};
    }
  }
}

}  // namespace detail

// Propagates the transverse Jacobi matrix of one branch through a single
// classified event; returns the updated matrix plus the conjugate-point
// increment accumulated strictly inside the preceding flight.
struct JacobiStep {
  Mat2 after;
  int conjugate_increment = 0;
  bool degenerate = false;
};

inline JacobiStep jacobi_step(const ModelDomain& m, const GeodesicPath& path, const Mat2& before,
                              double dt, const InterfaceHit& hit, bool refracted) {
  const auto fl = detail::jacobi_flight(m, path, before, dt, /*ends_at_event=*/true);
  JacobiStep out;
  out.conjugate_increment = fl.interior_zeros + (fl.zero_at_end ? 1 : 0);
  out.degenerate = fl.zero_at_end;
  // With no transverse directions the rank criterion is vacuous; the 1D
  // index instead decrements at every transmission. This is pinned by two
  // exact cross-checks on the layered model: it is the unique natural rule
  // for which sum w_d stays 1 on recombining trees AND the time-conjugated
  // quantum averages match the coherent classical side at machine level.
  if (m.variant == ModelVariant::Layered1D && refracted) out.conjugate_increment += 1;
  const Mat2 ev = refracted ? detail::jacobi_refract(m, hit) : detail::jacobi_reflect(m, hit);
  out.after = ev * fl.after;
  return out;
}

// ---------------------------------------------------------------------------
// Tree evolution

namespace detail {

inline void record_event(BranchTree& tree, const BranchState& b, char digit, char kind) {
  EventRecord r;
  r.branch_id = b.id;
  r.parent_id = b.parent;
  r.t = b.t;
  r.region = b.point.region;
  r.x[0] = b.point.x[0];
  r.x[1] = b.point.x[1];
  r.xi[0] = b.point.xi[0];
  r.xi[1] = b.point.xi[1];
  r.amp = b.amp;
  r.theta = b.theta;
  r.kappa_digit = digit;
  r.event_kind = kind;
  tree.events.push_back(r);
}

inline void kill_branch(BranchTree& tree, BranchState& b, LostReason why, const PrunePolicy& pol) {
  b.alive = false;
  b.lost_reason = why;
  tree.lost_mass += std::norm(b.amp);
  if (why == LostReason::Pruned) tree.prune_log.push_back({b.id, b.t, std::norm(b.amp)});
  if (pol.record_events)
    record_event(tree, b,
                 '-', why == LostReason::Grazing ? 'G' : (why == LostReason::Singular ? 'S' : 'P'));
}

}  // namespace detail

// Advance every alive branch to exactly t_target. Transmissible events spawn
// a refracted child (digit 2) while the reflected continuation keeps the
// branch id (digit 0). Total reflection and outer-boundary hits append the
// marker R. Budget violations flag the tree and freeze the branch without
// dropping its mass.
inline void evolve(const ModelDomain& m, BranchTree& tree, double t_target,
                   const PrunePolicy& pol = {}) {
  if (t_target < tree.horizon) throw ConfigError("evolve: t_target before current horizon");
  std::vector<std::size_t> work;
  for (std::size_t i = 0; i < tree.branches.size(); ++i)
    if (tree.branches[i].alive && tree.branches[i].t < t_target) work.push_back(i);

  while (!work.empty()) {
    const std::size_t idx = work.back();
    work.pop_back();
    BranchState& b = tree.branches[idx];  // NOTE: invalidated by push_back below
    if (!b.alive || b.t >= t_target) continue;

    Flight fl;
    try {
      fl = free_flight(m, b.point);
    } catch (const NumericDegeneracy&) {
      detail::kill_branch(tree, tree.branches[idx], LostReason::Grazing, pol);
      continue;
    }
    const double t_hit = b.t + fl.time;

    if (t_hit >= t_target) {
      const double dt = t_target - b.t;
      const auto fj = detail::jacobi_flight(m, fl.path, b.jacobi, dt, /*ends_at_event=*/false);
      b.jacobi = fj.after;
      b.theta -= fj.interior_zeros;
      b.point = fl.path.eval(m, dt);
      b.t = t_target;
      continue;
    }

    if (b.events >= pol.max_events) {
      // freeze at the current point: the tree is flagged, mass stays put
      tree.budget_exceeded = true;
      if (pol.record_events) detail::record_event(tree, b, '-', 'B');
      continue;
    }

    const InterfaceHit& hit = fl.hit;
    if (hit.kind == HitKind::Grazing || hit.kind == HitKind::Singular) {
      // advance to the boundary for bookkeeping, then terminate
      b.point = hit.incoming;
      b.t = t_hit;
      detail::kill_branch(tree, b,
                          hit.kind == HitKind::Grazing ? LostReason::Grazing : LostReason::Singular,
                          pol);
      continue;
    }

    const SplitOutcome split = split_at(m, hit);
    const double dt = fl.time;

    if (split.kind == SplitKind::TwoWay && std::norm(split.reflected_amp) < 1e-30) {
      // matched impedance: the reflected child carries no mass at all
      const auto js = jacobi_step(m, fl.path, b.jacobi, dt, hit, /*refracted=*/true);
      b.point = *split.refracted;
      b.t = t_hit;
      b.amp *= split.refracted_amp;
      b.theta -= js.conjugate_increment;
      b.kappa += '2';
      b.jacobi = js.after;
      b.degenerate_events += js.degenerate ? 1 : 0;
      b.events += 1;
      if (pol.record_events) detail::record_event(tree, b, '2', 'T');
      work.push_back(idx);
      continue;
    }

    if (split.kind == SplitKind::TwoWay) {
      if (tree.branches.size() + 1 > pol.max_branches) {
        tree.budget_exceeded = true;
        if (pol.record_events) detail::record_event(tree, b, '-', 'B');
        continue;
      }
      // refracted child (digit 2)
      const auto js_t = jacobi_step(m, fl.path, b.jacobi, dt, hit, /*refracted=*/true);
      BranchState child;
      child.point = *split.refracted;
      child.t = t_hit;
      child.amp = b.amp * split.refracted_amp;
      child.theta = b.theta - js_t.conjugate_increment;
      child.kappa = b.kappa + '2';
      child.jacobi = js_t.after;
      child.degenerate_events = b.degenerate_events + (js_t.degenerate ? 1 : 0);
      child.events = b.events + 1;
      child.id = static_cast<int>(tree.branches.size());
      child.parent = b.id;

      // reflected continuation (digit 0) keeps the branch id
      const auto js_r = jacobi_step(m, fl.path, b.jacobi, dt, hit, /*refracted=*/false);
      b.point = split.reflected;
      b.t = t_hit;
      b.amp *= split.reflected_amp;
      b.theta -= js_r.conjugate_increment;
      b.kappa += '0';
      b.jacobi = js_r.after;
      b.degenerate_events += js_r.degenerate ? 1 : 0;
      b.events += 1;
      if (pol.record_events) {
        detail::record_event(tree, b, '0', 'T');
        detail::record_event(tree, child, '2', 'T');
      }

      const std::size_t child_idx = tree.branches.size();
      tree.branches.push_back(std::move(child));  // may invalidate b
      BranchState& parent = tree.branches[idx];
      BranchState& kid = tree.branches[child_idx];
      bool parent_alive = true, kid_alive = true;
      if (std::norm(parent.amp) < pol.eps_amp) {
        detail::kill_branch(tree, parent, LostReason::Pruned, pol);
        parent_alive = false;
      }
      if (std::norm(kid.amp) < pol.eps_amp) {
        detail::kill_branch(tree, kid, LostReason::Pruned, pol);
        kid_alive = false;
      }
      if (kid_alive) work.push_back(child_idx);
      if (parent_alive) work.push_back(idx);
      continue;
    }

    // forced reflection (total reflection or outer boundary): marker R
    const auto js = jacobi_step(m, fl.path, b.jacobi, dt, hit, /*refracted=*/false);
    b.point = split.reflected;
    b.t = t_hit;
    b.amp *= split.reflected_amp;
    b.theta -= js.conjugate_increment;
    b.kappa += 'R';
    b.jacobi = js.after;
    b.degenerate_events += js.degenerate ? 1 : 0;
    b.events += 1;
    if (pol.record_events)
      detail::record_event(tree, b, 'R', split.kind == SplitKind::OuterBoundaryReflection ? 'O' : 'R');
    if (std::norm(b.amp) < pol.eps_amp) {
      detail::kill_branch(tree, b, LostReason::Pruned, pol);
      continue;
    }
    work.push_back(idx);
  }
  tree.horizon = t_target;
}

// ---------------------------------------------------------------------------
// Endpoint grouping

struct EndpointGroup {
  PhasePoint rep;
  std::vector<int> members;  // indices into tree.branches
  double w_c = 0.0;          // sum |amp|^2
  double w_d = 0.0;          // |sum i^theta amp|^2
  // Recombining groups split into two kinds: members with different event
  // counts (the substitution mechanism of the hemispheres example, possible
  // only when m+ c+ = m- c-) and permutations of the same arc multiset,
  // which recombine for any scale ratio.
  bool mixed_event_counts = false;
};

namespace detail {

// Comparable coordinates for endpoint matching; hemispheres use the 3D
// embedding so the longitude wrap never splits a group.
inline std::array<double, 6> endpoint_key(const ModelDomain& m, const PhasePoint& p) {
  switch (m.variant) {
    case ModelVariant::Layered1D: return {p.x[0], p.xi[0], 0, 0, 0, 0};
    case ModelVariant::GluedDisks: return {p.x[0], p.x[1], p.xi[0], p.xi[1], 0, 0};
    default: {
      const SpherePos sp = hemi_to_3d(m, p);
      return {sp.pos.x, sp.pos.y, sp.pos.z, sp.vel.x, sp.vel.y, sp.vel.z};
    }
  }
}

inline double key_distance(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double acc = 0.0;
  for (int i = 0; i < 6; ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

}  // namespace detail

// Branches whose endpoints coincide within merge_tol are grouped; each group
// carries the member amplitudes and Maslov counters.
inline std::vector<EndpointGroup> endpoint_set(const ModelDomain& m, const BranchTree& tree,
                                               double merge_tol = kMergeTol) {
  struct Entry {
    int branch;
    int region;
    std::array<double, 6> key;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < tree.branches.size(); ++i) {
    const auto& b = tree.branches[i];
    if (!b.alive) continue;
    entries.push_back({static_cast<int>(i), b.point.region, detail::endpoint_key(m, b.point)});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.region != b.region) return a.region < b.region;
    return a.key[0] < b.key[0];
  });

  std::vector<EndpointGroup> groups;
  std::vector<char> used(entries.size(), 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (used[i]) continue;
    EndpointGroup g;
    g.rep = tree.branches[entries[i].branch].point;
    g.members.push_back(entries[i].branch);
    used[i] = 1;
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      if (entries[j].region != entries[i].region) break;
      if (entries[j].key[0] - entries[i].key[0] > merge_tol) break;
      if (used[j]) continue;
      if (detail::key_distance(entries[i].key, entries[j].key) <= merge_tol) {
        g.members.push_back(entries[j].branch);
        used[j] = 1;
      }
    }
    cplx coherent{0.0, 0.0};
    for (int bi : g.members) {
      const auto& b = tree.branches[bi];
      g.w_c += std::norm(b.amp);
      coherent += i_pow(b.theta) * b.amp;
      if (b.events != tree.branches[g.members.front()].events) g.mixed_event_counts = true;
    }
    g.w_d = std::norm(coherent);
    groups.push_back(std::move(g));
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Single weighted path (Monte Carlo route through the branch tree)

// Walks one trajectory, choosing the refracted continuation with probability
// amp_t^2 at every two-way event. visit(t, point, path, t0) is called for
// every requested time, in order. Returns false if the path died (grazing or
// singular hit) before the last requested time.
template <typename Visit>
inline bool walk_path(const ModelDomain& m, const PhasePoint& start, std::mt19937_64& rng,
                      const std::vector<double>& times, int max_events_per_unit_time,
                      Visit&& visit) {
  PhasePoint p = normalize_on_shell(m, start);
  double t = 0.0;
  std::size_t next = 0;
  const double t_end = times.empty() ? 0.0 : times.back();
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const long long max_events =
      16 + static_cast<long long>(max_events_per_unit_time * (t_end + 1.0));
  long long events = 0;
  while (next < times.size()) {
    Flight fl;
    try {
      fl = free_flight(m, p);
    } catch (const NumericDegeneracy&) {
      return false;
    }
    const double t_hit = t + fl.time;
    while (next < times.size() && times[next] <= t_hit) {
      visit(times[next], fl.path.eval(m, times[next] - t));
      ++next;
    }
    if (next >= times.size()) break;
    if (++events > max_events) return false;
    const InterfaceHit& hit = fl.hit;
    if (hit.kind == HitKind::Grazing || hit.kind == HitKind::Singular) return false;
    const SplitOutcome split = split_at(m, hit);
    t = t_hit;
    if (split.kind == SplitKind::TwoWay) {
      const double p_refract = split.refracted_amp * split.refracted_amp;
      p = (uni(rng) < p_refract) ? *split.refracted : split.reflected;
    } else {
      p = split.reflected;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Finite-difference transverse bundle (universal fallback and test oracle)

namespace fd {

// Perpendicular offset dj and direction tilt dth applied to an on-shell point.
inline PhasePoint offset_transverse(const ModelDomain& m, const PhasePoint& p0, double dj,
                                    double dth) {
  PhasePoint p = normalize_on_shell(m, p0);
  switch (m.variant) {
    case ModelVariant::Layered1D: return p;
    case ModelVariant::GluedDisks: {
      const Vec2 d{p.xi[0], p.xi[1]};
      const Vec2 j = perp(d);
      p.x[0] += dj * j.x;
      p.x[1] += dj * j.y;
      const double cs = std::cos(dth), sn = std::sin(dth);
      p.xi[0] = cs * d.x - sn * d.y;
      p.xi[1] = sn * d.x + cs * d.y;
      return p;
    }
    default: {
      const SpherePos sp = hemi_to_3d(m, p);
      const double c = m.hemisphere_scale(p.region);
      const Vec3 j = cross(sp.pos, sp.vel);  // unit perpendicular
      const double a = dj / c;               // metric offset -> standard angle
      const Vec3 pos = sp.pos * std::cos(a) + j * std::sin(a);
      Vec3 vel = sp.vel - dot(sp.vel, pos) * pos;
      vel = normalized(vel);
      const Vec3 jn = cross(pos, vel);
      const Vec3 tilted = vel * std::cos(dth) + jn * std::sin(dth);
      return hemi_from_3d(m, p.region, pos, tilted);
    }
  }
}

// Follow a prescribed digit route ('0'/'2'/'R') from start for time t.
// Throws NumericDegeneracy when the route does not match the event sequence.
inline PhasePoint follow_route(const ModelDomain& m, const PhasePoint& start,
                               const std::string& route, double t) {
  PhasePoint p = normalize_on_shell(m, start);
  double tcur = 0.0;
  std::size_t k = 0;
  while (true) {
    Flight fl = free_flight(m, p);
    if (tcur + fl.time >= t) return fl.path.eval(m, t - tcur);
    tcur += fl.time;
    if (k >= route.size()) throw NumericDegeneracy("follow_route: route too short");
    const char digit = route[k++];
    const InterfaceHit& hit = fl.hit;
    if (hit.kind == HitKind::Grazing || hit.kind == HitKind::Singular)
      throw NumericDegeneracy("follow_route: dead trajectory");
    const SplitOutcome split = split_at(m, hit);
    if (digit == '2') {
      if (split.kind != SplitKind::TwoWay)
        throw NumericDegeneracy("follow_route: refraction unavailable");
      p = *split.refracted;
    } else {
      p = split.reflected;
    }
  }
}

// Perpendicular displacement/tilt of q relative to the reference point r.
inline std::pair<double, double> transverse_coords(const ModelDomain& m, const PhasePoint& r,
                                                   const PhasePoint& q) {
  switch (m.variant) {
    case ModelVariant::Layered1D: return {0.0, 0.0};
    case ModelVariant::GluedDisks: {
      const Vec2 pr{r.x[0], r.x[1]}, pq{q.x[0], q.x[1]};
      const Vec2 dr{r.xi[0], r.xi[1]}, dq{q.xi[0], q.xi[1]};
      const Vec2 j = perp(dr);
      return {dot(pq - pr, j), std::asin(std::clamp(cross(dr, dq), -1.0, 1.0))};
    }
    default: {
      const SpherePos sr = hemi_to_3d(m, r), sq = hemi_to_3d(m, q);
      const double c = m.hemisphere_scale(r.region);
      const Vec3 j = cross(sr.pos, sr.vel);
      return {c * dot(sq.pos - sr.pos, j), dot(sq.vel, j)};
    }
  }
}

// 2x2 transverse monodromy along a fixed route by Richardson-extrapolated
// central differences.
inline Mat2 monodromy(const ModelDomain& m, const PhasePoint& start, const std::string& route,
                      double t, double h = 1e-6) {
  const PhasePoint ref = follow_route(m, start, route, t);
  auto columns = [&](double step) {
    Mat2 M;
    {
      const PhasePoint qp = follow_route(m, offset_transverse(m, start, step, 0.0), route, t);
      const PhasePoint qm = follow_route(m, offset_transverse(m, start, -step, 0.0), route, t);
      const auto [jp, tp] = transverse_coords(m, ref, qp);
      const auto [jm, tm] = transverse_coords(m, ref, qm);
      M.a = (jp - jm) / (2.0 * step);
      M.c = (tp - tm) / (2.0 * step);
    }
    {
      const PhasePoint qp = follow_route(m, offset_transverse(m, start, 0.0, step), route, t);
      const PhasePoint qm = follow_route(m, offset_transverse(m, start, 0.0, -step), route, t);
      const auto [jp, tp] = transverse_coords(m, ref, qp);
      const auto [jm, tm] = transverse_coords(m, ref, qm);
      M.b = (jp - jm) / (2.0 * step);
      M.d = (tp - tm) / (2.0 * step);
    }
    return M;
  };
  const Mat2 Mh = columns(h), Mh2 = columns(h / 2.0);
  Mat2 R;
  R.a = (4.0 * Mh2.a - Mh.a) / 3.0;
  R.b = (4.0 * Mh2.b - Mh.b) / 3.0;
  R.c = (4.0 * Mh2.c - Mh.c) / 3.0;
  R.d = (4.0 * Mh2.d - Mh.d) / 3.0;
  return R;
}

}  // namespace fd

}  // namespace raysplit
