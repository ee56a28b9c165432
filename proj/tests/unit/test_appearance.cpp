#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mif/appearance.hpp"
#include "oracles.hpp"

using namespace mif;

namespace {

VecX unit_random(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v.normalized();
}

GaussianPrimitive prim(double g, double alpha) {
  GaussianPrimitive p;
  p.instability = g;
  p.opacity = alpha;
  p.feature = VecX::Unit(4, 0);
  return p;
}

}  // namespace

TEST_CASE("confidence gate values") {
  const ConfidenceParams params;
  CHECK(confidence_value(0.0, 0.3, params) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(confidence_value(0.0, 7.0, params) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(confidence_value(1.0, 1.0, params) - 0.503369) < 1e-6);
  const double far = confidence_value(10.0, 1.0, params);
  CHECK(far > 1.4e-8);
  CHECK(far < 1.6e-8);
}

TEST_CASE("estimate_confidence uses the set means") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GaussianPrimitive> ps;
  for (int i = 0; i < 50; ++i) ps.push_back(prim(2.0 * u(rng), u(rng)));
  double mg = 0, ma = 0;
  for (auto& p : ps) {
    mg += p.instability / 50;
    ma += p.opacity / 50;
  }
  const auto out = estimate_confidence(ps, {});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(std::abs(out[i].confidence - oracle::confidence(ps[i].instability / mg, ps[i].opacity / ma, 5, 2)) < 1e-12);
  }
}

TEST_CASE("estimate_confidence edge cases") {
  CHECK_THROWS_AS(estimate_confidence({}, {}), EmptyInput);
  CHECK_THROWS_AS(estimate_confidence({prim(1, 0), prim(2, 0)}, {}), DegenerateOpacity);
  const auto out = estimate_confidence({prim(0, 0.2), prim(0, 0.9)}, {});
  for (const auto& p : out) CHECK(p.confidence == 1.0);
}

TEST_CASE("confidence is non-increasing in instability") {
  const ConfidenceParams params;
  for (double a : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    double prev = 2.0;
    for (int k = 0; k < 100; ++k) {
      const double c = confidence_value(k * 0.1, a, params);
      CHECK(c <= prev + 1e-15);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      prev = c;
    }
  }
}

TEST_CASE("compositing examples") {
  const VecX f1 = VecX::Unit(3, 0), f2 = VecX::Unit(3, 1);
  std::vector<RaySample> one{{1.0, 1.0, f1}};
  CHECK((composite_features(one, 3).feature - f1).norm() < 1e-15);

  std::vector<RaySample> two{{1.0, 0.5, f1}, {1.0, 1.0, f2}};
  const Composite c = composite_features(two, 3);
  CHECK((c.feature - (0.5 * f1 + 0.5 * f2)).norm() < 1e-15);
  CHECK(c.weight == doctest::Approx(1.0));

  std::vector<RaySample> ghost{{0.0, 0.9, f1}, {1.0, 1.0, f2}};
  CHECK((composite_features(ghost, 3).feature - f2).norm() < 1e-15);

  CHECK(composite_features(std::vector<RaySample>{}, 5).feature.isZero());
}

TEST_CASE("full-confidence compositing equals plain alpha compositing") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RaySample> s;
    const int n = 1 + int(rng() % 10);
    for (int i = 0; i < n; ++i) s.push_back({1.0, u(rng), unit_random(8, rng)});
    // back-to-front "over" operator as the reference
    VecX ref = VecX::Zero(8);
    for (int i = n - 1; i >= 0; --i) ref = s[i].opacity * s[i].feature + (1 - s[i].opacity) * ref;
    CHECK((composite_features(s, 8).feature - ref).norm() < 1e-12);

    for (auto& r : s) r.confidence = u(rng);
    const auto t = transmittance(s);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] <= t[i - 1]);
    const double w = composite_features(s, 8).weight;
    CHECK(w >= 0.0);
    CHECK(w <= 1.0 + 1e-12);
  }
}

TEST_CASE("weighted centroid") {
  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  std::vector<double> c{1.0, 1.0}, a{1.0, 3.0};
  CHECK((weighted_centroid(pts, c, a) - Vec3(0.75, 0, 0)).norm() < 1e-15);
  std::vector<double> ones{1, 1};
  CHECK((weighted_centroid(pts, ones, ones) - Vec3(0.5, 0, 0)).norm() < 1e-15);
  std::vector<Vec3> single{Vec3(1, 2, 3)};
  std::vector<double> w1{0.3};
  CHECK((weighted_centroid(single, w1, w1) - single[0]).norm() < 1e-15);
  std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(weighted_centroid(pts, zero, a), DegenerateWeight);

  // support-function test for hull membership
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> p;
    std::vector<double> cc, aa;
    for (int i = 0; i < 6; ++i) {
      p.push_back(Vec3(u(rng), u(rng), u(rng)) * 4 - Vec3::Constant(2));
      cc.push_back(u(rng));
      aa.push_back(u(rng));
    }
    const Vec3 m = weighted_centroid(p, cc, aa);
    for (int d = 0; d < 20; ++d) {
      const Vec3 dir = unit_random(3, rng);
      double hi = -1e9;
      for (auto& x : p) hi = std::max(hi, x.dot(dir));
      CHECK(m.dot(dir) <= hi + 1e-12);
    }
  }
}

TEST_CASE("node reliability") {
  CHECK(node_reliability(std::vector<double>{1, 1, 1}) == 1.0);
  CHECK(node_reliability(std::vector<double>{0.2, 0.8}) == doctest::Approx(0.5));
  CHECK(node_reliability(std::vector<double>{0.0}) == 0.0);
  CHECK_THROWS_AS(node_reliability(std::vector<double>{}), EmptyInput);
}

TEST_CASE("codec on low-rank data is exact") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  const MatX basis = MatX::NullaryExpr(32, 512, [&] { return n(rng); });
  const MatX coeff = MatX::NullaryExpr(400, 32, [&] { return n(rng); });
  const MatX data = coeff * basis;
  const FeatureCodec codec = FeatureCodec::fit(data, 32);
  CHECK(codec.latent_dim() == 32);
  for (int i = 0; i < 50; ++i) {
    const VecX x = data.row(i).transpose();
    CHECK((codec.decode(codec.encode(x)) - x).norm() / x.norm() < 1e-9);
  }
  CHECK(codec.encode(codec.mean()).norm() < 1e-9);
  for (int i = 0; i < 20; ++i) {
    const VecX z = VecX::NullaryExpr(32, [&] { return n(rng); });
    CHECK((codec.encode(codec.decode(z)) - z).norm() < 1e-9);
  }
}

TEST_CASE("codec truncation error equals the discarded spectrum") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  const MatX data = MatX::NullaryExpr(300, 100, [&] { return n(rng); }) *
                    MatX::NullaryExpr(100, 128, [&] { return n(rng); });
  const FeatureCodec codec = FeatureCodec::fit(data, 32);
  double err = 0.0;
  for (int i = 0; i < data.rows(); ++i) {
    const VecX x = data.row(i).transpose();
    err += (codec.decode(codec.encode(x)) - x).squaredNorm();
  }
  // tail energy from the eigenvalues of the scatter matrix
  const MatX centered = data.rowwise() - data.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatX> eig(centered.transpose() * centered);
  const VecX ev = eig.eigenvalues();  // ascending
  const double tail = ev.head(ev.size() - 32).sum();
  CHECK(std::abs(err - tail) / tail < 1e-6);

  CHECK_THROWS_AS(FeatureCodec::fit(MatX::Ones(10, 64), 32), InsufficientData);
  CHECK_THROWS_AS(codec.encode(VecX::Zero(5)), DimensionMismatch);
}

TEST_CASE("primitive records") {
  GaussianPrimitive p;
  p.id = 7;
  p.position = Vec3(0.5, -1.25, 2);
  p.opacity = 0.75;
  p.instability = 0.125;
  p.confidence = 1;
  p.feature = VecX::Unit(2, 1);
  p.object_id = 42;
  CHECK(primitive_record(p) ==
        R"({"id":7,"position":[0.5,-1.25,2],"alpha":0.75,"g":0.125,"confidence":1,"latent":[0,1],"object_id":42})");

  std::stringstream io;
  std::vector<GaussianPrimitive> v{p};
  v.push_back(p);
  v.back().object_id.reset();
  write_primitives(io, v);
  const auto back = read_primitives(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0].feature == p.feature);
  CHECK(back[0].object_id == 42);
  CHECK(!back[1].object_id);

  std::stringstream bad("{\"id\":1}\n");
  CHECK_THROWS_AS(read_primitives(bad), ParseError);
}
