#include <random>

#include "doctest.h"
#include "mif/navigation.hpp"
#include "oracles.hpp"
#include "scurve.hpp"

using namespace mif;

TEST_CASE("planning on an empty grid") {
  const OccupancyGrid g(Vec2(0, 0), 0.1, 50, 50);
  const auto p = plan_path(g, Vec2(0.55, 0.55), Vec2(4.05, 3.25), 0.0);
  CHECK(p.waypoints.size() == 2);
  CHECK((p.waypoints.front() - Vec2(0.55, 0.55)).norm() < 1e-12);
  CHECK((p.waypoints.back() - Vec2(4.05, 3.25)).norm() < 1e-12);
}

TEST_CASE("planning through a gap matches Dijkstra") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 20 + int(rng() % 60), h = 20 + int(rng() % 40);
    OccupancyGrid g(Vec2(-1, 2), 0.1, w, h);
    const int wall = w / 2, gap = 2 + int(rng() % (h - 4));
    for (int j = 0; j < h; ++j)
      if (std::abs(j - gap) > 1) g.set(wall, j, true);
    for (int k = 0; k < w * h / 20; ++k) g.set(int(rng() % w), int(rng() % h), true);
    const int si = 1, sj = int(rng() % h), gi = w - 2, gj = int(rng() % h);
    g.set(si, sj, false);
    g.set(gi, gj, false);
    std::vector<std::vector<int>> occ(w, std::vector<int>(h));
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < h; ++j) occ[i][j] = g.occupied(i, j);
    const double ref = oracle::grid_dijkstra(occ, si, sj, gi, gj);
    if (!std::isfinite(ref)) {
      CHECK_THROWS_AS(plan_path(g, g.center(si, sj), g.center(gi, gj), 0.0), NoPath);
      continue;
    }
    const auto p = plan_path(g, g.center(si, sj), g.center(gi, gj), 0.0);
    CHECK(std::abs(p.grid_cost - ref * 0.1) < 1e-9);
    for (const auto& c : p.grid_path) CHECK(!g.blocked(c));
    // through the gap
    bool crossed = false;
    for (const auto& c : p.grid_path) crossed |= g.cell_of(c).first == wall && std::abs(g.cell_of(c).second - gap) <= 1;
    CHECK(crossed);
    CHECK(p.length() <= p.grid_cost + 1e-9);
  }
}

TEST_CASE("walled goal has no path") {
  OccupancyGrid g(Vec2(0, 0), 0.1, 30, 30);
  for (int i = 18; i <= 22; ++i)
    for (int j = 18; j <= 22; ++j)
      if (i == 18 || i == 22 || j == 18 || j == 22) g.set(i, j, true);
  CHECK_THROWS_AS(plan_path(g, g.center(2, 2), g.center(20, 20), 0.0), NoPath);
  CHECK_THROWS_AS(plan_path(g, g.center(2, 2), g.center(20, 20), 0.25), NoPath);
}

TEST_CASE("inflation") {
  OccupancyGrid g(Vec2(0, 0), 0.1, 21, 21);
  g.set(10, 10, true);
  const auto inf = g.inflated(0.2);
  int n = 0;
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) n += inf.occupied(i, j);
  CHECK(n == 13);  // cells within two steps in the Euclidean disc
}

TEST_CASE("velocity law") {
  TrackingParams p;
  CHECK(adaptive_velocity(0.0, p).v == p.v_max);
  CHECK(adaptive_velocity(0.0, p).lookahead == doctest::Approx(std::min(p.L_max, p.L0 + p.k_v * p.v_max)));
  p.k_theta = 1.0;
  CHECK(adaptive_velocity(1.0, p).v == 0.0);
  CHECK(adaptive_velocity(-2.0, p).v == 0.0);
  CHECK(adaptive_velocity(0.5, p).v == doctest::Approx(0.5 * p.v_max));
}

TEST_CASE("pure pursuit curvature examples") {
  TrackingParams fixed;
  fixed.L0 = fixed.L_min = fixed.L_max = 1.0;
  const std::vector<Vec2> ahead{Vec2(0, 0), Vec2(10, 0)};
  auto st = pure_pursuit_step(Pose2{0, 0, 0}, ahead, fixed);
  CHECK(st.delta_theta == 0.0);
  CHECK(st.kappa == 0.0);
  CHECK(st.v == fixed.v_max);

  st = pure_pursuit_step(Pose2{0, 0, -kPi / 6}, ahead, fixed);
  CHECK(std::abs(st.delta_theta - kPi / 6) < 1e-12);
  CHECK(std::abs(st.kappa - 1.0) < 1e-12);

  fixed.L0 = fixed.L_min = fixed.L_max = 0.5;
  st = pure_pursuit_step(Pose2{0, 0, 0}, std::vector<Vec2>{Vec2(0, 0), Vec2(0, 5)}, fixed);
  CHECK(std::abs(st.delta_theta - kPi / 2) < 1e-12);
  CHECK(std::abs(st.kappa - 4.0) < 1e-12);

  CHECK_THROWS_AS(pure_pursuit_step(Pose2{}, std::vector<Vec2>{}, fixed), NoPath);
}

TEST_CASE("pure pursuit invariants on random paths") {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const TrackingParams p;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Vec2> path;
    for (int k = 0; k < 2 + int(rng() % 5); ++k) path.emplace_back(u(rng), u(rng));
    const Pose2 pose{u(rng), u(rng), u(rng)};
    const auto st = pure_pursuit_step(pose, path, p);
    CHECK(std::abs(st.kappa - oracle::pursuit_curvature(st.delta_theta, st.lookahead)) < 1e-12);
    const Vec2 d = st.lookahead_point - pose.position();
    if (d.norm() > 0) CHECK(std::abs(normalize_angle(std::atan2(d.y(), d.x()) - pose.theta) - st.delta_theta) < 1e-12);
    CHECK(st.v >= 0.0);
    CHECK(st.v <= p.v_max);
    CHECK(st.lookahead >= p.L_min);
    CHECK(st.lookahead <= p.L_max);
    if (st.v > 0) {
      CHECK(std::abs(st.omega - st.v * st.kappa) < 1e-12);
      CHECK(std::abs(st.lookahead - std::clamp(p.L0 + p.k_v * st.v, p.L_min, p.L_max)) < 1e-12);
    } else {
      CHECK(std::abs(st.omega) == p.turn_rate);
    }
  }
}

TEST_CASE("unicycle integration") {
  Pose2 a = step_unicycle(Pose2{0, 0, 0}, 1.0, 0.0, 1.0);
  CHECK((a.position() - Vec2(1, 0)).norm() < 1e-15);
  a = step_unicycle(Pose2{1, 2, 0.5}, 0.0, kPi, 1.0);
  CHECK(a.position() == Vec2(1, 2));
  CHECK(std::abs(std::abs(a.theta) - std::abs(normalize_angle(0.5 + kPi))) < 1e-12);
  a = step_unicycle(Pose2{0, 0, 0}, 1.0, 1.0, kPi);
  CHECK((a.position() - Vec2(0, 2)).norm() < 1e-12);
  CHECK(std::abs(std::abs(a.theta) - kPi) < 1e-12);

  // composing small steps equals one step on the same arc
  Pose2 b{0.3, -0.2, 1.1};
  for (int k = 0; k < 10; ++k) b = step_unicycle(b, 0.4, -0.7, 0.1);
  const Pose2 c = step_unicycle(Pose2{0.3, -0.2, 1.1}, 0.4, -0.7, 1.0);
  CHECK((b.position() - c.position()).norm() < 1e-12);
  CHECK_THROWS_AS(step_unicycle(Pose2{}, 1, 1, 0.0), std::invalid_argument);
}

TEST_CASE("s-curve tracking") {
  const TrackingParams p;
  const auto adaptive = scurve::track(p);
  const auto fixed = scurve::track(scurve::fixed_velocity(p));
  CHECK(adaptive.arrived);
  CHECK(fixed.arrived);
  CHECK(adaptive.max_cross_track < 0.15);
  CHECK(adaptive.oscillation_rms <= 0.7 * fixed.oscillation_rms);
  MESSAGE("cross-track " << adaptive.max_cross_track << " m, oscillation rms " << adaptive.oscillation_rms << " vs "
                         << fixed.oscillation_rms);
}
