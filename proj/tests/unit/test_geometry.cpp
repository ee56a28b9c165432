#include <algorithm>
#include <random>

#include "doctest.h"
#include "mif/geometry.hpp"
#include "oracles.hpp"

using namespace mif;

namespace {

TriangleMesh odd_shape() {
  std::vector<TriangleMesh> parts{make_box(0.6, 0.2, 0.1),
                                  make_box(0.2, 0.5, 0.1).transformed(Mat3::Identity(), Vec3(0.2, 0.35, 0)),
                                  make_cylinder(0.05, 0.4).transformed(Mat3::Identity(), Vec3(-0.2, 0, 0.1))};
  return merge_meshes(parts);
}

}  // namespace

TEST_CASE("viewpoint lattice") {
  const Vec3 c(1, 2, 0.5);
  const auto one = sample_viewpoints(c, 0.8, 1);
  REQUIRE(one.size() == 1);
  CHECK((one[0].position - (c + Vec3(0, 0, 0.8))).norm() < 1e-12);

  const auto views = sample_viewpoints(c, 1.2, 64);
  CHECK(views.size() == 64);
  for (const auto& v : views) {
    CHECK(std::abs((v.position - c).norm() - 1.2) < 1e-9);
    CHECK(v.position.z() >= c.z() - 1e-12);
    CHECK(std::abs(v.axis.dot((c - v.position).normalized()) - 1.0) < 1e-9);
  }
}

TEST_CASE("viewpoint utility") {
  const Vec3 c = Vec3::Zero();
  const std::vector<double> full{1.0, 1.0};
  Viewpoint side{Vec3(1, 0, 0), Vec3(0, 1, 0)};
  CHECK(viewpoint_utility(side, c, full) == 0.0);
  Viewpoint aligned{Vec3(1, 0, 0), Vec3(-1, 0, 0)};
  CHECK(std::abs(viewpoint_utility(aligned, c, full) - std::exp(-0.5)) < 1e-12);
  CHECK(viewpoint_utility(aligned, c, std::vector<double>{0.0}) == 0.0);
  Viewpoint on{c, Vec3(0, 0, 1)};
  CHECK_THROWS_AS(viewpoint_utility(on, c, full), DegenerateView);

  // monotone in distance for fixed alignment
  double prev = 2.0;
  for (int k = 1; k <= 50; ++k) {
    Viewpoint v{Vec3(0.1 * k, 0, 0), Vec3(-1, 0, 0)};
    const double q = viewpoint_utility(v, c, full);
    CHECK(q <= prev);
    prev = q;
  }

  // ranking on a lattice with uniform reliability: argmax by enumeration
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 cen(u(rng), u(rng), u(rng));
    auto views = sample_viewpoints(cen, 0.5 + std::abs(u(rng)), 64);
    for (auto& v : views) v.axis = (v.axis + 0.3 * Vec3(u(rng), u(rng), u(rng))).normalized();
    const auto ranked = rank_viewpoints(views, cen, full);
    double best = -1;
    for (const auto& v : views) best = std::max(best, oracle::view_utility(v.position, v.axis, cen, full, 1.0, 2.0));
    CHECK(std::abs(ranked.front().second - best) < 1e-12);
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i].second <= ranked[i - 1].second);
  }
}

TEST_CASE("similarity fit recovers exact transforms") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> src;
  for (int i = 0; i < 50; ++i) src.emplace_back(u(rng), u(rng), u(rng));
  SimilarityTransform t;
  t.rotation = Eigen::AngleAxisd(2.5, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  t.scale = 0.7;
  t.translation = Vec3(1, -2, 0.5);
  std::vector<Vec3> dst;
  for (auto& p : src) dst.push_back(t.apply(p));
  std::vector<double> w(src.size(), 1.0);
  const auto f = fit_similarity(src, dst, w);
  CHECK(std::abs(f.scale - 0.7) < 1e-12);
  CHECK(rotation_angle(f.rotation * t.rotation.transpose()) < 1e-9);
  CHECK((f.translation - t.translation).norm() < 1e-12);
  CHECK(std::abs(f.rotation.determinant() - 1.0) < 1e-12);

  // a reflection is not a rotation: the fit stays proper
  std::vector<Vec3> mirrored;
  for (auto& p : src) mirrored.emplace_back(-p.x(), p.y(), p.z());
  CHECK(fit_similarity(src, mirrored, w).rotation.determinant() == doctest::Approx(1.0));

  const auto inv = t.inverse();
  CHECK((inv.apply(t.apply(src[0])) - src[0]).norm() < 1e-12);
  CHECK(((t * inv).apply(src[1]) - src[1]).norm() < 1e-12);
}

TEST_CASE("icp examples") {
  std::mt19937_64 rng(43);
  const auto pts = sample_surface(odd_shape(), 600, rng);
  const auto same = scaled_robust_icp(pts, pts, SimilarityTransform::identity());
  CHECK(std::abs(same.transform.scale - 1.0) < 1e-12);
  CHECK(same.residual < 1e-12);

  SimilarityTransform t;
  t.scale = 1.3;
  t.rotation = Eigen::AngleAxisd(20 * kPi / 180, Vec3::UnitZ()).toRotationMatrix();
  t.translation = Vec3(0.5, 0, 0);
  std::vector<Vec3> dst;
  for (auto& p : pts) dst.push_back(t.apply(p));
  SimilarityTransform init;
  init.scale = 1.2;
  init.translation = Vec3(0.45, 0.02, 0);
  const auto r = scaled_robust_icp(pts, dst, init);
  CHECK(std::abs(r.transform.scale - 1.3) < 1e-3);
  CHECK(rotation_angle(r.transform.rotation * t.rotation.transpose()) * 180 / kPi < 0.1);
  CHECK((r.transform.translation - t.translation).norm() < 1e-3);
  for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
    CHECK(r.residual_history[i] <= r.residual_history[i - 1] + 1e-12);
  }

  // 10% of the target replaced by outliers in a 2 m box
  std::vector<Vec3> noisy = dst;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3 c = t.apply(odd_shape().centroid());
  for (std::size_t i = 0; i < noisy.size(); i += 10) noisy[i] = c + Vec3(u(rng), u(rng), u(rng));
  auto err = [&](const SimilarityTransform& f) {
    return std::max(std::abs(f.scale - t.scale), (f.translation - t.translation).norm());
  };
  const auto hub = scaled_robust_icp(pts, noisy, init);
  CHECK(err(hub.transform) < 5e-3);
  CHECK(rotation_angle(hub.transform.rotation * t.rotation.transpose()) * 180 / kPi < 0.5);
  IcpOptions sq;
  sq.loss = RobustLoss::kSquared;
  CHECK(err(hub.transform) <= err(scaled_robust_icp(pts, noisy, init, sq).transform) + 1e-12);

  // scale does not depend on point order
  std::vector<Vec3> shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<Vec3> dst2;
  for (auto& p : shuffled) dst2.push_back(t.apply(p));
  const auto r2 = scaled_robust_icp(shuffled, dst2, init);
  CHECK(std::abs(r2.transform.scale - r.transform.scale) < 1e-9);

  std::vector<Vec3> flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(2, 1, 0)};
  CHECK_THROWS_AS(scaled_robust_icp(flat, pts, init), DegenerateGeometry);
}

TEST_CASE("robust loss") {
  IcpOptions o;
  CHECK(robust_loss(0.01, o) == doctest::Approx(0.5 * 0.01 * 0.01));
  CHECK(robust_loss(1.0, o) == doctest::Approx(0.05 * (1.0 - 0.025)));
}

TEST_CASE("mesh provision") {
  AssetTable assets;
  assets.add(3, make_box(0.2, 0.3, 0.4));
  CHECK(provide_mesh(assets, 3, {0.0, false}, 1) == assets.get(3));
  CHECK_THROWS_AS(provide_mesh(assets, 4, {}, 1), AssetNotFound);

  for (bool remesh : {false, true}) {
    const TriangleMesh a = provide_mesh(assets, 3, {0.005, remesh}, 77);
    const TriangleMesh b = provide_mesh(assets, 3, {0.005, remesh}, 77);
    CHECK(a == b);
    CHECK(is_watertight(a));
    if (!remesh) {
      for (std::size_t i = 0; i < a.vertices().size(); ++i) {
        CHECK((a.vertices()[i] - assets.get(3).vertices()[i]).norm() <= 4 * 0.005 * std::sqrt(3.0) + 1e-12);
      }
    }
  }
}
