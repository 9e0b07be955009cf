#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "raysplit/geometry.hpp"
#include "raysplit/snell.hpp"

using namespace raysplit;

namespace {

ModelDomain two_layer() {
  Layered1DSpec spec;
  spec.lengths = {1.0, 1.0};
  spec.stiffness = {1.0, 4.0};
  spec.b = {0.5};
  return ModelDomain::layered1d(spec);
}

PhasePoint equator_start(const ModelDomain& m, int region, double phi, double v_phi, double v_z) {
  const Vec3 P{std::cos(phi), std::sin(phi), 0.0};
  const Vec3 eph{-std::sin(phi), std::cos(phi), 0.0};
  Vec3 V = v_phi * eph + Vec3{0.0, 0.0, v_z};
  V = normalized(V);
  return hemi_from_3d(m, region, P, V);
}

PhasePoint interior_hemi(const ModelDomain& m, int region, double phi, double z, double angle) {
  const double st = std::sqrt(1.0 - z * z);
  const Vec3 P{st * std::cos(phi), st * std::sin(phi), region == 0 ? z : -z};
  const Vec3 e1 = normalized(cross(P, Vec3{0.0, 0.0, 1.0}));
  const Vec3 e2 = cross(P, e1);
  return hemi_from_3d(m, region, P, e1 * std::cos(angle) + e2 * std::sin(angle));
}

}  // namespace

TEST_CASE("free flight: radial chord in the unit disk") {
  auto m = ModelDomain::glued_disks(CircleMap::identity());
  PhasePoint p;
  p.region = 0;
  p.x[0] = 0.0;
  p.x[1] = 0.0;
  p.xi[0] = 1.0;
  p.xi[1] = 0.0;
  const Flight f = free_flight(m, p);
  CHECK(f.time == Catch::Approx(1.0).margin(1e-14));
  CHECK(f.hit.y_chart == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("free flight: great circle through the pole") {
  auto m = ModelDomain::hemispheres(1.0, 1.0);
  const PhasePoint p = equator_start(m, 0, 0.3, 0.0, 1.0);  // due north
  const Flight f = free_flight(m, p);
  CHECK(f.time == Catch::Approx(kPi).margin(1e-12));
  CHECK(std::abs(circ_diff(f.hit.y_chart, 0.3 + kPi)) < 1e-9);
}

TEST_CASE("free flight: layered speed sqrt(p)") {
  auto m = two_layer();
  PhasePoint p;
  p.region = 0;
  p.x[0] = 0.5;
  p.xi[0] = 1.0;  // normalized internally
  const Flight f = free_flight(m, p);
  CHECK(f.hit.y_chart == Catch::Approx(1.0).margin(1e-14));
  CHECK(f.time == Catch::Approx(0.5).margin(1e-13));
  // independent oracle: integrate Hamilton's equations for H = sqrt(p xi^2)
  const double x_oracle = oracles::hamilton_rk4_position(1.0, 0.5, 1.0, f.time, 200);
  CHECK(x_oracle == Catch::Approx(1.0).margin(1e-10));

  PhasePoint q;
  q.region = 1;
  q.x[0] = 1.25;
  q.xi[0] = 0.5;  // on-shell in p=4
  const Flight g = free_flight(m, q);
  CHECK(g.hit.y_chart == Catch::Approx(2.0).margin(1e-14));
  CHECK(g.time == Catch::Approx(0.75 / 2.0).margin(1e-13));
  CHECK(g.hit.kind == HitKind::OuterBoundary);
}

TEST_CASE("classify: hemisphere normal incidence is transmissible") {
  auto m = ModelDomain::hemispheres(1.0, 1.0);
  const PhasePoint p = equator_start(m, 0, 1.0, 0.0, -1.0);  // straight at the equator
  const InterfaceHit h = hit_from_boundary_point(m, p);
  CHECK(h.kind == HitKind::Transmissible);
  CHECK(h.tau_plus == Catch::Approx(1.0).margin(1e-14));
  CHECK(h.tau_minus == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("classify: hemisphere total reflection via both cometrics") {
  auto m = ModelDomain::hemispheres(1.0, 0.5);
  // |eta| = 0.8: on-shell in the plus side with tangential velocity 0.8
  const PhasePoint p = equator_start(m, 0, 0.2, 0.8, -0.6);
  const InterfaceHit h = hit_from_boundary_point(m, p);
  CHECK(std::abs(h.eta) == Catch::Approx(0.8).margin(1e-12));
  CHECK(h.g_self == Catch::Approx(0.64).margin(1e-12));
  CHECK(h.g_other == Catch::Approx(2.56).margin(1e-12));  // eta^2 / c_-^2
  CHECK(h.kind == HitKind::TotalReflection);
  CHECK(h.tau_plus == Catch::Approx(0.6).margin(1e-12));
  CHECK(h.tau_tilde_minus == Catch::Approx(std::sqrt(1.56)).margin(1e-12));
}

TEST_CASE("classify: 1D interface always transmissible with tau = 1") {
  auto m = two_layer();
  PhasePoint p;
  p.region = 0;
  p.x[0] = 1.0;
  p.xi[0] = 1.0;
  const InterfaceHit h = hit_from_boundary_point(m, p);
  CHECK(h.kind == HitKind::Transmissible);
  CHECK(h.eta == 0.0);
  CHECK(h.tau_plus == 1.0);
  CHECK(h.tau_minus == 1.0);
}

TEST_CASE("classify: grazing and singular") {
  auto m = ModelDomain::glued_disks(CircleMap::sine(0.3, 0.0));
  // start near the rim moving almost tangentially: nearly unit |u| at the hit
  PhasePoint p;
  p.region = 0;
  p.x[0] = std::sqrt(1.0 - 1e-18);
  p.x[1] = 0.0;
  p.xi[0] = -1e-10;
  p.xi[1] = 1.0;
  const Flight f = free_flight(m, p);
  CHECK(f.hit.kind == HitKind::Grazing);

  auto ms = ModelDomain::glued_disks(CircleMap::identity());
  ms.singular_points = {0.0};
  PhasePoint q;
  q.region = 0;
  q.x[0] = 0.0;
  q.x[1] = 0.0;
  q.xi[0] = 1.0;
  q.xi[1] = 0.0;
  const Flight g = free_flight(ms, q);
  CHECK(g.hit.kind == HitKind::Singular);
}

TEST_CASE("energy conservation along path descriptors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  auto md = ModelDomain::glued_disks(CircleMap::sine(0.3, 0.0));
  auto mh = ModelDomain::hemispheres(1.3, 0.6);
  for (int trial = 0; trial < 50; ++trial) {
    {
      PhasePoint p;
      p.region = trial % 2;
      const double r = 0.8 * std::sqrt(uni(rng));
      const double a = kTwoPi * uni(rng);
      p.x[0] = r * std::cos(a);
      p.x[1] = r * std::sin(a);
      const double th = kTwoPi * uni(rng);
      p.xi[0] = std::cos(th);
      p.xi[1] = std::sin(th);
      const Flight f = free_flight(md, p);
      for (double frac : {0.25, 0.5, 0.99}) {
        const PhasePoint q = f.path.eval(md, frac * f.time);
        CHECK(std::abs(cometric(md, q) - 1.0) < 1e-10);
      }
    }
    {
      const double phi = kTwoPi * uni(rng);
      const double z = 0.2 + 0.6 * uni(rng);
      const int region = trial % 2;
      const double st = std::sqrt(1.0 - z * z);
      const Vec3 P{st * std::cos(phi), st * std::sin(phi), region == 0 ? z : -z};
      Vec3 e1 = normalized(cross(P, Vec3{0, 0, 1}));
      const Vec3 e2 = cross(P, e1);
      const double al = kTwoPi * uni(rng);
      const PhasePoint p = hemi_from_3d(mh, region, P, e1 * std::cos(al) + e2 * std::sin(al));
      const Flight f = free_flight(mh, p);
      for (double frac : {0.25, 0.5, 0.99}) {
        const PhasePoint q = f.path.eval(mh, frac * f.time);
        CHECK(std::abs(cometric(mh, q) - 1.0) < 1e-10);
      }
    }
  }
}

// The time-reversal involution: negating the incoming covector at the hit
// retraces the flight (equivalently, the reflected covector with the
// tangential component reversed; in 1D the two coincide).
TEST_CASE("time reversal returns to the start") {
  {
    auto mh = ModelDomain::hemispheres(1.0, 0.7);
    PhasePoint p = interior_hemi(mh, 0, 0.9, 0.55, 2.1);
    const Flight f = free_flight(mh, p);
    PhasePoint back = f.hit.incoming;
    back.xi[0] = -back.xi[0];
    back.xi[1] = -back.xi[1];
    const Flight g = free_flight(mh, back);
    const PhasePoint q = g.path.eval(mh, f.time);
    const SpherePos sq = hemi_to_3d(mh, q);
    const SpherePos s0 = hemi_to_3d(mh, normalize_on_shell(mh, p));
    CHECK(norm(sq.pos - s0.pos) < 1e-9);
  }
  {
    auto md = ModelDomain::glued_disks(CircleMap::sine(0.3, 0.1));
    PhasePoint p;
    p.region = 1;
    p.x[0] = 0.37;
    p.x[1] = -0.21;
    p.xi[0] = std::cos(2.3);
    p.xi[1] = std::sin(2.3);
    const Flight f = free_flight(md, p);
    PhasePoint back = f.hit.incoming;
    back.xi[0] = -back.xi[0];
    back.xi[1] = -back.xi[1];
    const PhasePoint q = free_flight(md, back).path.eval(md, f.time);
    CHECK(std::hypot(q.x[0] - p.x[0], q.x[1] - p.x[1]) < 1e-9);
  }
  {
    auto m1 = two_layer();
    PhasePoint p;
    p.region = 1;
    p.x[0] = 1.3;
    p.xi[0] = 0.5;
    const Flight f = free_flight(m1, p);
    // 1D: the reflected covector IS the negated incoming
    const PhasePoint back = reflect_covector(m1, f.hit);
    CHECK(back.xi[0] == Catch::Approx(-f.hit.incoming.xi[0]).margin(1e-15));
    const PhasePoint q = free_flight(m1, back).path.eval(m1, f.time);
    CHECK(std::abs(q.x[0] - p.x[0]) < 1e-12);
  }
}

TEST_CASE("flight time is homogeneous of degree zero in the covector") {
  auto m = two_layer();
  PhasePoint p;
  p.region = 1;
  p.x[0] = 1.4;
  p.xi[0] = -0.5;
  const double t1 = free_flight(m, p).time;
  for (double lam : {0.5, 2.0}) {
    PhasePoint q = p;
    q.xi[0] *= lam;
    q.on_shell = false;
    CHECK(free_flight(m, q).time == Catch::Approx(t1).margin(1e-13));
  }

  auto md = ModelDomain::glued_disks(CircleMap::identity());
  PhasePoint c;
  c.region = 0;
  c.x[0] = 0.2;
  c.x[1] = -0.1;
  c.xi[0] = 0.6;
  c.xi[1] = 0.8;
  const double t2 = free_flight(md, c).time;
  for (double lam : {0.5, 2.0}) {
    PhasePoint q = c;
    q.xi[0] *= lam;
    q.xi[1] *= lam;
    q.on_shell = false;
    CHECK(free_flight(md, q).time == Catch::Approx(t2).margin(1e-13));
  }
}

TEST_CASE("circle map: sine family and table agree, inverse to 1e-12") {
  const CircleMap sine = CircleMap::sine(0.3, 0.4);
  std::vector<double> samples(256);
  for (int i = 0; i < 256; ++i) {
    const double s = kTwoPi * i / 256.0;
    samples[i] = sine.chi(s);
  }
  const CircleMap tab = CircleMap::table(samples);
  for (int i = 0; i < 97; ++i) {
    const double s = kTwoPi * i / 97.0;
    CHECK(tab.chi(s) == Catch::Approx(sine.chi(s)).margin(1e-8));
    CHECK(tab.dchi(s) == Catch::Approx(sine.dchi(s)).margin(1e-5));
    CHECK(sine.chi(sine.inverse(s)) == Catch::Approx(s).margin(1e-12));
    CHECK(tab.chi(tab.inverse(s)) == Catch::Approx(s).margin(1e-12));
  }
  // degree-1 periodicity
  CHECK(sine.chi(1.0 + kTwoPi) == Catch::Approx(sine.chi(1.0) + kTwoPi).margin(1e-12));
  CHECK(sine.inverse(1.0 + kTwoPi) == Catch::Approx(sine.inverse(1.0) + kTwoPi).margin(1e-11));
}

TEST_CASE("model invariants are validated") {
  Layered1DSpec bad;
  bad.lengths = {1.0, -1.0};
  bad.stiffness = {1.0, 1.0};
  bad.b = {1.0};
  CHECK_THROWS_AS(ModelDomain::layered1d(bad), ConfigError);
  CHECK_THROWS_AS(ModelDomain::hemispheres(1.0, -2.0), ConfigError);
  CHECK_THROWS_AS(CircleMap::sine(1.5, 0.0), ConfigError);
}

TEST_CASE("on-shell normalization") {
  auto m = ModelDomain::hemispheres(2.0, 1.0);
  PhasePoint p;
  p.region = 0;
  p.x[0] = 0.4;
  p.x[1] = 1.0;
  p.xi[0] = 0.3;
  p.xi[1] = -0.9;
  const PhasePoint q = normalize_on_shell(m, p);
  CHECK(std::abs(cometric(m, q) - 1.0) < 1e-12);
}
