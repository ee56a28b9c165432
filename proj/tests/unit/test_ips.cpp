#include <random>

#include "doctest.h"
#include "mif/ips.hpp"
#include "oracles.hpp"

using namespace mif;

namespace {

TriangleMesh table() { return make_box(1.0, 0.6, 0.75); }  // x in [-.5,.5], y in [-.3,.3]

StancePose single_sphere(double x, double y, double r) {
  StancePose p = StancePose::with_default_body(x, y, 0.0);
  p.body = {{Vec3(0, 0, 0.5), r}};
  return p;
}

}  // namespace

TEST_CASE("clearance") {
  const MeshDistance cube(make_box(1, 1, 1).transformed(Mat3::Identity(), Vec3(0.5, 0.5, 0)));
  const auto s = posed_body(single_sphere(-0.5, 0.5, 0.1));
  CHECK(std::abs(min_clearance(s, cube) - 0.4) < 1e-12);
  CHECK(min_clearance(posed_body(single_sphere(0.5, 0.5, 0.1)), cube) < 0);

  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const TriangleMesh base = table();
  for (int trial = 0; trial < 30; ++trial) {
    const StancePose p = StancePose::with_default_body(u(rng) * 2, u(rng) * 2, u(rng) * 3);
    const double ang = u(rng) * kPi;
    const Vec3 shift(u(rng), u(rng), 0);
    const Mat3 r = Eigen::AngleAxisd(ang, Vec3::UnitZ()).toRotationMatrix();
    std::vector<Sphere> moved = posed_body(p);
    for (auto& sp : moved) sp.center = r * sp.center + shift;
    CHECK(std::abs(min_clearance(posed_body(p), base) - min_clearance(moved, base.transformed(r, shift))) < 1e-9);
  }
}

TEST_CASE("collision check") {
  const MeshDistance m(table());
  CHECK(check_collision(StancePose::with_default_body(-1.8, 0, 0), m));
  CHECK(!check_collision(StancePose::with_default_body(-0.6, 0, 0), m));

  // dyadic values make the boundary exact: clearance 0.1875 - 0.125 = 0.0625
  const MeshDistance cube(make_box(1, 1, 1).transformed(Mat3::Identity(), Vec3(0.5, 0.5, 0)));
  const StancePose edge = single_sphere(-0.1875, 0.5, 0.125);
  CHECK(min_clearance(posed_body(edge), cube) == 0.0625);
  CHECK(!check_collision(edge, cube, 0.0625));
  CHECK(check_collision(edge, cube, 0.0625 - 1e-9));

  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const StancePose p = StancePose::with_default_body(u(rng), u(rng), u(rng));
    const double d = 0.1 * std::abs(u(rng));
    if (check_collision(p, m, d)) CHECK(check_collision(p, m, 0.5 * d));
  }
}

TEST_CASE("reach check") {
  const MeshDistance m(table());
  const ReachModel reach;
  const StancePose p = StancePose::with_default_body(-0.8, 0, 0);
  const Vec3 sh = shoulder_position(p, reach);
  const Vec3 mid = sh + 0.5 * (reach.r_min + reach.r_max) * Vec3(1, 0, -0.6).normalized();
  CHECK(check_reach(p, mid, reach, m));
  CHECK(!check_reach(p, sh + Vec3(reach.r_max + 0.05, 0, 0), reach, m));
  CHECK(!check_reach(p, sh + Vec3(0.1, 0, 0), reach, m));

  // slab between shoulder and target
  const MeshDistance slab(make_box(0.05, 1.0, 2.0).transformed(Mat3::Identity(), Vec3(sh.x() + 0.3, 0, 0)));
  CHECK(!check_reach(p, sh + Vec3(0.6, 0, 0), reach, slab));
  CHECK(check_reach(p, sh + Vec3(0.6, 0, 0), reach, m));
}

TEST_CASE("stability check") {
  StancePose p = StancePose::with_default_body(1, 2, 0.3);
  CHECK(check_stability(p, p.com()));
  CHECK(!check_stability(p, p.to_world(Vec3(1.2, 0, 0.9))));
  // feet span x in [-0.11, 0.11]: 1 cm inside the raw edge is inside the band
  CHECK(!check_stability(p, p.to_world(Vec3(0.10, 0, 0.9))));
  CHECK(check_stability(p, p.to_world(Vec3(0.08, 0, 0.9))));

  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    StancePose a = StancePose::with_default_body(0, 0, 0);
    const Vec3 com_local(0.15 * u(rng), 0.2 * u(rng), 0.9);
    StancePose b = StancePose::with_default_body(3 * u(rng), 3 * u(rng), kPi * u(rng));
    CHECK(check_stability(a, a.to_world(com_local)) == check_stability(b, b.to_world(com_local)));
  }

  StancePose flat = p;
  flat.feet[0].width = 0.0;
  CHECK_THROWS_AS(support_polygon(flat), DegenerateSupport);
}

TEST_CASE("ips conjunction") {
  const MeshDistance m(table());
  const ReachModel reach;
  const Vec3 target(-0.3, 0, 0.8);
  const auto ok = ips(StancePose::with_default_body(-0.8, 0, 0), m, target, reach);
  CHECK(ok.i_col);
  CHECK(ok.i_ik);
  CHECK(ok.i_stab);
  CHECK(ok.safe());

  const auto bump = ips(StancePose::with_default_body(-0.65, 0, 0), m, target, reach);
  CHECK(!bump.i_col);
  CHECK(bump.i_ik);
  CHECK(bump.i_stab);
  CHECK(!bump.safe());

  const auto far = ips(StancePose::with_default_body(-2.0, 0, 0), m, target, reach);
  CHECK(!far.i_ik);
  CHECK(!far.safe());

  std::mt19937_64 rng(54);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const MeshDistance dense(subdivide(table(), 2));
  for (int trial = 0; trial < 300; ++trial) {
    const StancePose p = face_target(StancePose::with_default_body(1.5 * u(rng), 1.5 * u(rng), 0), target);
    const auto d = ips(p, m, target, reach);
    CHECK(d.safe() == (d.i_col && d.i_ik && d.i_stab));
    if (d.safe()) CHECK(min_clearance(posed_body(p), dense) > 0.0);
  }
}

TEST_CASE("micro adjustment") {
  const MeshDistance m(table());
  const ReachModel reach;
  const Vec3 target(-0.3, 0, 0.8);
  const StancePose good = StancePose::with_default_body(-0.8, 0, 0);
  const StancePose same = micro_adjust_stance(good, m, target, reach);
  CHECK(same.x == good.x);
  CHECK(same.y == good.y);

  const StancePose bad = face_target(StancePose::with_default_body(-0.62, 0.05, 0), target);
  REQUIRE(!ips(bad, m, target, reach).safe());
  const StancePose fixed = micro_adjust_stance(bad, m, target, reach);
  CHECK(ips(fixed, m, target, reach).safe());
  CHECK((Vec2(fixed.x, fixed.y) - Vec2(bad.x, bad.y)).norm() <= 0.5 + 1e-12);

  // target sealed inside a tall block: no candidate reaches it
  const MeshDistance block(make_box(1.2, 1.2, 2.0));
  CHECK_THROWS_AS(
      micro_adjust_stance(StancePose::with_default_body(-0.9, 0, 0), block, Vec3(0, 0, 0.8), reach),
      NoFeasibleStance);
}
