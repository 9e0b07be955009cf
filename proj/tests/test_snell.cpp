#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "raysplit/snell.hpp"

using namespace raysplit;

namespace {

ModelDomain two_layer(double b = 0.5) {
  Layered1DSpec spec;
  spec.lengths = {1.0, 1.0};
  spec.stiffness = {1.0, 4.0};
  spec.b = {b};
  return ModelDomain::layered1d(spec);
}

PhasePoint equator_out(const ModelDomain& m, int region, double phi, double eta) {
  const double c = m.hemisphere_scale(region);
  const double vph = eta / c;
  const double vz = (region == 0 ? -1.0 : 1.0) * std::sqrt(1.0 - vph * vph);
  const Vec3 P{std::cos(phi), std::sin(phi), 0.0};
  const Vec3 eph{-std::sin(phi), std::cos(phi), 0.0};
  return hemi_from_3d(m, region, P, vph * eph + Vec3{0, 0, vz});
}

InterfaceHit random_transmissible_hit(const ModelDomain& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int attempt = 0; attempt < 200; ++attempt) {
    InterfaceHit h;
    switch (m.variant) {
      case ModelVariant::Layered1D: {
        PhasePoint p;
        p.region = uni(rng) < 0.5 ? 0 : 1;
        p.x[0] = m.cumulative[1];
        p.xi[0] = p.region == 0 ? 1.0 : -1.0;
        h = hit_from_boundary_point(m, p);
        break;
      }
      case ModelVariant::GluedDisks: {
        PhasePoint p;
        p.region = uni(rng) < 0.5 ? 0 : 1;
        const double a = kTwoPi * uni(rng);
        const double u = 2.0 * uni(rng) - 1.0;
        const Vec2 Q{std::cos(a), std::sin(a)};
        const Vec2 T{-std::sin(a), std::cos(a)};
        const Vec2 d = u * T + std::sqrt(1.0 - u * u) * Q;  // outward
        p.x[0] = Q.x;
        p.x[1] = Q.y;
        p.xi[0] = d.x;
        p.xi[1] = d.y;
        h = hit_from_boundary_point(m, p);
        break;
      }
      default: {
        const int region = uni(rng) < 0.5 ? 0 : 1;
        const double c = m.hemisphere_scale(region);
        const double eta = c * (2.0 * uni(rng) - 1.0);
        h = hit_from_boundary_point(m, equator_out(m, region, kTwoPi * uni(rng), eta));
        break;
      }
    }
    if (h.kind == HitKind::Transmissible) return h;
  }
  throw std::runtime_error("no transmissible hit found");
}

}  // namespace

TEST_CASE("lemma coefficients: matched impedance") {
  const auto lc = lemma_two_way(1.0, 0.7, 0.7);
  CHECK(lc.reflected == Catch::Approx(0.0).margin(1e-15));
  CHECK(lc.refracted == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("lemma coefficients: frozen two-way values") {
  const auto lc = lemma_two_way(1.0, 0.6, 0.8);
  CHECK(lc.reflected == Catch::Approx(-1.0 / 7.0).epsilon(1e-14));
  CHECK(lc.refracted == Catch::Approx(0.98974331861078697).epsilon(1e-14));
  CHECK(lc.reflected * lc.reflected + lc.refracted * lc.refracted ==
        Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("lemma coefficients: total reflection phase") {
  const cplx r = lemma_total_reflection(1.0, 0.6, 0.8);
  CHECK(std::abs(r) == Catch::Approx(1.0).margin(1e-15));
  const cplx expect = cplx{0.6, -0.8} / cplx{0.6, 0.8};
  CHECK(std::abs(r - expect) < 1e-15);
  CHECK(std::arg(r) > -kPi);
  CHECK(std::arg(r) <= kPi);
}

TEST_CASE("reflect_covector: 1D mirror and disk specular law") {
  auto m1 = two_layer();
  PhasePoint p;
  p.region = 0;
  p.x[0] = 1.0;
  p.xi[0] = 1.0;
  const InterfaceHit h1 = hit_from_boundary_point(m1, p);
  const PhasePoint r1 = reflect_covector(m1, h1);
  CHECK(r1.xi[0] == Catch::Approx(-1.0).margin(1e-14));

  auto md = ModelDomain::glued_disks(CircleMap::identity());
  PhasePoint q;
  q.region = 0;
  const double a = 0.7, u = 0.42;
  const Vec2 Q{std::cos(a), std::sin(a)};
  const Vec2 T{-std::sin(a), std::cos(a)};
  const Vec2 d = u * T + std::sqrt(1.0 - u * u) * Q;
  q.x[0] = Q.x;
  q.x[1] = Q.y;
  q.xi[0] = d.x;
  q.xi[1] = d.y;
  const InterfaceHit h2 = hit_from_boundary_point(md, q);
  const PhasePoint r2 = reflect_covector(md, h2);
  const Vec2 rd{r2.xi[0], r2.xi[1]};
  CHECK(dot(rd, T) == Catch::Approx(u).margin(1e-13));       // tangential kept
  CHECK(dot(rd, Q) == Catch::Approx(-std::sqrt(1.0 - u * u)).margin(1e-13));
}

TEST_CASE("reflect_covector: hemisphere stays on shell (symbolic oracle)") {
  auto m = ModelDomain::hemispheres(1.0, 0.5);
  const InterfaceHit h = hit_from_boundary_point(m, equator_out(m, 0, 0.4, 0.37));
  const PhasePoint r = reflect_covector(m, h);
  CHECK(r.region == 0);
  CHECK(std::abs(cometric(m, r) - 1.0) < 1e-12);  // g_+ re-verified
  CHECK(r.xi[0] == Catch::Approx(h.eta).margin(1e-12));
}

TEST_CASE("refract_covector: straight continuation when metrics match") {
  auto m = ModelDomain::hemispheres(1.0, 1.0);
  const InterfaceHit h = hit_from_boundary_point(m, equator_out(m, 0, 1.2, 0.5));
  const PhasePoint t = refract_covector(m, h);
  CHECK(t.region == 1);
  const SpherePos sp = hemi_to_3d(m, t);
  CHECK(norm(sp.vel - h.vel3) < 1e-12);  // same 3D direction
}

TEST_CASE("refract_covector: on-shell in the far metric (symbolic oracle)") {
  auto m = ModelDomain::hemispheres(1.0, 2.0);
  const InterfaceHit h = hit_from_boundary_point(m, equator_out(m, 0, 0.0, 0.5));
  const PhasePoint t = refract_covector(m, h);
  CHECK(t.region == 1);
  CHECK(std::abs(cometric(m, t) - 1.0) < 1e-12);
  CHECK(t.xi[0] == Catch::Approx(h.eta).margin(1e-12));  // eta transported
}

TEST_CASE("refract_covector: isometric gluing mirrors the chart conormal") {
  auto m = ModelDomain::glued_disks(CircleMap::identity());
  std::mt19937_64 rng(3);
  const InterfaceHit h = random_transmissible_hit(m, rng);
  const PhasePoint t = refract_covector(m, h);
  const Vec2 pos{t.x[0], t.x[1]};
  const Vec2 d{t.xi[0], t.xi[1]};
  CHECK(std::abs(std::abs(cross(pos, d)) - std::abs(h.u_self)) < 1e-12);
  CHECK(t.region == 1 - h.from_region);
  CHECK(dot(pos, d) < 0.0);  // moving inward
}

TEST_CASE("refract_covector rejects total reflection") {
  auto m = ModelDomain::hemispheres(1.0, 0.5);
  const InterfaceHit h = hit_from_boundary_point(m, equator_out(m, 0, 0.0, 0.8));
  REQUIRE(h.kind == HitKind::TotalReflection);
  CHECK_THROWS_AS(refract_covector(m, h), TotalReflectionInput);
}

TEST_CASE("split_amplitudes: layered interface with configured b") {
  auto m = two_layer(0.5);
  PhasePoint p;
  p.region = 0;
  p.x[0] = 1.0;
  p.xi[0] = 1.0;
  const InterfaceHit h = hit_from_boundary_point(m, p);
  const SplitOutcome out = split_at(m, h);
  REQUIRE(out.kind == SplitKind::TwoWay);
  CHECK(out.b_used == 0.5);
  CHECK(out.reflected_amp.real() == Catch::Approx(-1.0 / 3.0).epsilon(1e-14));
  CHECK(std::norm(out.reflected_amp) + out.refracted_amp * out.refracted_amp ==
        Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("split_amplitudes: outer boundary signs") {
  Layered1DSpec spec;
  spec.lengths = {1.0};
  spec.stiffness = {1.0};
  spec.b = {};
  spec.left = EndCondition::Dirichlet;
  spec.right = EndCondition::Neumann;
  auto m = ModelDomain::layered1d(spec);
  PhasePoint p;
  p.region = 0;
  p.x[0] = 0.0;
  p.xi[0] = -1.0;
  const SplitOutcome lo = split_at(m, hit_from_boundary_point(m, p));
  CHECK(lo.kind == SplitKind::OuterBoundaryReflection);
  CHECK(lo.reflected_amp == cplx{-1.0, 0.0});
  p.x[0] = 1.0;
  p.xi[0] = 1.0;
  const SplitOutcome hi = split_at(m, hit_from_boundary_point(m, p));
  CHECK(hi.reflected_amp == cplx{1.0, 0.0});
}

TEST_CASE("boundary density ratio per model") {
  auto mh = ModelDomain::hemispheres(2.0, 1.0);
  const InterfaceHit hp = hit_from_boundary_point(mh, equator_out(mh, 0, 0.1, 0.2));
  CHECK(boundary_density_ratio(mh, hp) == Catch::Approx(2.0).margin(1e-14));
  // oracle: finite-difference arclength ratio of a short equator segment in
  // the two side metrics c_{+/-} * dphi
  const double dphi = 1e-4;
  const double len_plus = mh.c_plus * dphi, len_minus = mh.c_minus * dphi;
  CHECK(boundary_density_ratio(mh, hp) == Catch::Approx(len_plus / len_minus).margin(1e-12));
  const InterfaceHit hm = hit_from_boundary_point(mh, equator_out(mh, 1, 0.1, 0.2));
  CHECK(boundary_density_ratio(mh, hm) == Catch::Approx(0.5).margin(1e-14));

  auto md = ModelDomain::glued_disks(CircleMap::identity());
  std::mt19937_64 rng(11);
  const InterfaceHit hd = random_transmissible_hit(md, rng);
  CHECK(boundary_density_ratio(md, hd) == Catch::Approx(1.0).margin(1e-12));

  auto m1 = two_layer(0.5);
  PhasePoint p;
  p.region = 0;
  p.x[0] = 1.0;
  p.xi[0] = 1.0;
  CHECK(boundary_density_ratio(m1, hit_from_boundary_point(m1, p)) == 0.5);
}

TEST_CASE("unitarity on random transmissible hits (all models)") {
  std::mt19937_64 rng(42);
  std::vector<ModelDomain> models;
  models.push_back(two_layer(0.7));
  models.push_back(ModelDomain::glued_disks(CircleMap::sine(0.3, 0.0)));
  models.push_back(ModelDomain::hemispheres(1.0, 0.5));
  for (const auto& m : models) {
    for (int i = 0; i < 2000; ++i) {
      const InterfaceHit h = random_transmissible_hit(m, rng);
      const SplitOutcome out = split_at(m, h);
      const double sum = std::norm(out.reflected_amp) + out.refracted_amp * out.refracted_amp;
      REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("reciprocity: the two refraction maps invert each other") {
  std::mt19937_64 rng(5);
  auto m = ModelDomain::glued_disks(CircleMap::sine(0.3, 0.7));
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const InterfaceHit h = random_transmissible_hit(m, rng);
    const PhasePoint t = refract_covector(m, h);
    // time-reverse the refracted covector and refract back
    PhasePoint rev = t;
    rev.xi[0] = -rev.xi[0];
    rev.xi[1] = -rev.xi[1];
    const InterfaceHit h2 = hit_from_boundary_point(m, rev);
    if (h2.kind != HitKind::Transmissible) continue;
    const PhasePoint back = refract_covector(m, h2);
    // should equal the time-reverse of the incoming covector
    CHECK(back.x[0] == Catch::Approx(h.incoming.x[0]).margin(1e-10));
    CHECK(back.x[1] == Catch::Approx(h.incoming.x[1]).margin(1e-10));
    CHECK(back.xi[0] == Catch::Approx(-h.incoming.xi[0]).margin(1e-10));
    CHECK(back.xi[1] == Catch::Approx(-h.incoming.xi[1]).margin(1e-10));
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("side-swap symmetry of the refracted amplitude") {
  std::mt19937_64 rng(9);
  auto m = ModelDomain::hemispheres(1.0, 0.8);
  for (int i = 0; i < 100; ++i) {
    const InterfaceHit h = random_transmissible_hit(m, rng);
    const double b = boundary_density_ratio(m, h);
    const auto fwd = lemma_two_way(b, h.tau_plus, h.tau_minus);
    // swap roles: approach from the other side with b -> 1/b, taus swapped
    const auto swp = lemma_two_way(1.0 / b, h.tau_minus, h.tau_plus);
    CHECK(fwd.refracted == Catch::Approx(swp.refracted).epsilon(1e-12));
    CHECK(fwd.reflected == Catch::Approx(-swp.reflected).epsilon(1e-12));
  }
}

TEST_CASE("reflected amplitude sign follows b tau_+ vs tau_-") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uni(0.05, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double b = uni(rng) * 2.0, tp = uni(rng), tm = uni(rng);
    const auto lc = lemma_two_way(b, tp, tm);
    CHECK((lc.reflected < 0.0) == (b * tp < tm));
  }
}
