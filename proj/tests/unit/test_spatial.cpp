#include <functional>
#include <random>

#include "doctest.h"
#include "mif/spatial.hpp"
#include "oracles.hpp"
#include "random_graphs.hpp"

using namespace mif;

namespace {

GraphNode node(NodeId id, const std::string& cap, Vec3 c, double omega = 1.0, VecX f = VecX::Unit(4, 0)) {
  GraphNode n;
  n.id = id;
  n.caption = cap;
  n.room = "office";
  n.centroid = c;
  n.reliability = omega;
  n.feature = f;
  return n;
}

Detection det(const std::string& cat, Vec3 c, Vec3 ext) {
  Detection d;
  d.category = cat;
  d.room = "office";
  d.centroid = c;
  d.extent = ext;
  d.feature = VecX::Unit(4, 0);
  d.support_confidence = {0.2, 0.8};
  return d;
}

// (cardinality, cost) of the best gated partial matching by exhaustive search.
std::pair<int, double> brute_match(const SceneGraph& l, const SceneGraph& g, const DiscrepancyParams& p) {
  std::vector<const GraphNode*> ln, gn;
  for (auto& [id, n] : l.nodes()) ln.push_back(&n);
  for (auto& [id, n] : g.nodes()) gn.push_back(&n);
  std::pair<int, double> best{-1, 0.0};
  std::vector<char> used(gn.size(), 0);
  std::function<void(std::size_t, int, double)> rec = [&](std::size_t i, int card, double cost) {
    if (i == ln.size()) {
      if (card > best.first || (card == best.first && cost < best.second)) best = {card, cost};
      return;
    }
    rec(i + 1, card, cost);
    for (std::size_t j = 0; j < gn.size(); ++j) {
      if (used[j] || (ln[i]->centroid - gn[j]->centroid).norm() > p.gate_radius) continue;
      used[j] = 1;
      const double c = p.w_pos * (ln[i]->centroid - gn[j]->centroid).norm() +
                       p.w_sem * (1 - oracle::cosine(ln[i]->feature, gn[j]->feature));
      rec(i + 1, card + 1, cost + c);
      used[j] = 0;
    }
  };
  rec(0, 0, 0.0);
  return best;
}

}  // namespace

TEST_CASE("local graph construction") {
  CHECK(build_local_graph(std::vector<Detection>{}).node_count() == 0);

  // mug (0.1 tall) resting on a 0.75 tall table
  std::vector<Detection> stack{det("table", Vec3(0, 0, 0.375), Vec3(1, 0.6, 0.75)),
                               det("mug", Vec3(0.1, 0, 0.8), Vec3(0.08, 0.08, 0.1))};
  SceneGraph g = build_local_graph(stack);
  CHECK(g.node_count() == 2);
  CHECK(g.edges().count(Edge{1, kOnLabel, 0}) == 1);
  CHECK(g.node(1).reliability == doctest::Approx(0.5));

  std::vector<Detection> floor{det("box", Vec3(0, 0, 0.2), Vec3(0.3, 0.3, 0.4)),
                               det("bin", Vec3(0.5, 0, 0.2), Vec3(0.3, 0.3, 0.4))};
  g = build_local_graph(floor);
  CHECK(g.edges().count(Edge{0, kNextToLabel, 1}) == 1);
  CHECK(g.edge_count() == 1);
}

TEST_CASE("node discrepancy examples") {
  const DiscrepancyParams p;
  CHECK(node_discrepancy(node(0, "a", Vec3(1, 2, 3)), node(1, "a", Vec3(1, 2, 3)), p) == 0.0);
  CHECK(node_discrepancy(node(0, "a", Vec3(0, 0, 0)), node(1, "a", Vec3(0.5, 0, 0)), p) == doctest::Approx(0.5));
  VecX f(2);
  f << 0.8, 0.6;
  const double d = node_discrepancy(node(0, "a", Vec3::Zero(), 0.5, VecX::Unit(2, 0)), node(1, "a", Vec3(0.2, 0, 0), 1, f), p);
  CHECK(std::abs(d - 0.15) < 1e-12);
  CHECK_THROWS_AS(node_discrepancy(node(0, "a", Vec3::Zero(), 1, VecX::Ones(2)), node(1, "a", Vec3::Zero()), p),
                  NormalizationError);

  // linear in Omega
  for (double w : {0.1, 0.25, 0.5}) {
    const double a = node_discrepancy(node(0, "a", Vec3::Zero(), w), node(1, "a", Vec3(0.3, 0.1, 0)), p);
    const double b = node_discrepancy(node(0, "a", Vec3::Zero(), 2 * w), node(1, "a", Vec3(0.3, 0.1, 0)), p);
    CHECK(std::abs(b - 2 * a) < 1e-15);
  }
}

TEST_CASE("total discrepancy examples") {
  const DiscrepancyParams p;
  SceneGraph g;
  g.add_node(node(0, "a", Vec3(0, 0, 0)));
  g.add_node(node(1, "b", Vec3(0.5, 0, 0)));
  g.add_edge({0, kNextToLabel, 1});
  Matching m = match_nodes(g, g, p);
  CHECK(m.pairs.size() == 2);
  CHECK(m.unmatched_local.empty());
  CHECK(m.unmatched_global.empty());
  CHECK(total_discrepancy(g, g, m, p) == 0.0);
  CHECK(total_discrepancy(SceneGraph{}, g, match_nodes(SceneGraph{}, g, p), p) == 0.0);

  SceneGraph one_l, one_g;
  one_l.add_node(node(0, "a", Vec3(0, 0, 0)));
  one_g.add_node(node(0, "a", Vec3(0.5, 0, 0)));
  CHECK(total_discrepancy(one_l, one_g, match_nodes(one_l, one_g, p), p) == doctest::Approx(0.5));

  SceneGraph l3 = g, g3 = g;
  l3.add_node(node(2, "c", Vec3(0, 0.5, 0)));
  g3.add_node(node(2, "c", Vec3(0, 0.5, 0)));
  l3.remove_edge({0, kNextToLabel, 1});
  g3.remove_edge({0, kNextToLabel, 1});
  l3.add_edge({0, kNextToLabel, 1});
  g3.add_edge({1, kNextToLabel, 2});
  CHECK(std::abs(total_discrepancy(l3, g3, match_nodes(l3, g3, p), p) - 0.8) < 1e-12);
}

TEST_CASE("matching examples") {
  const DiscrepancyParams p;
  SceneGraph g;
  g.add_node(node(0, "a", Vec3(0, 0, 0)));
  SceneGraph l = g;
  l.add_node(node(1, "z", Vec3(5, 0, 0)));
  const Matching m = match_nodes(l, g, p);
  CHECK(m.pairs.size() == 1);
  REQUIRE(m.unmatched_local.size() == 1);
  CHECK(m.unmatched_local[0] == 1);

  // crossed positions
  SceneGraph cl, cg;
  cl.add_node(node(0, "a", Vec3(0, 0, 0)));
  cl.add_node(node(1, "b", Vec3(0.6, 0, 0)));
  cg.add_node(node(0, "a", Vec3(0.55, 0, 0)));
  cg.add_node(node(1, "b", Vec3(0.05, 0, 0)));
  const Matching c = match_nodes(cl, cg, p);
  const double straight = 0.55 + 0.55, crossed = 0.05 + 0.05;
  CHECK(c.total_cost == doctest::Approx(std::min(straight, crossed)));
}

TEST_CASE("matching is optimal against exhaustive search") {
  const DiscrepancyParams p;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    SceneGraph l, g;
    const int nl = 1 + int(rng() % 6), ng = 1 + int(rng() % 6);
    for (int i = 0; i < nl; ++i) l.add_node(node(i, "x", Vec3(2 * u(rng), 2 * u(rng), 0), 1, testgen::unit_vec(4, rng)));
    for (int i = 0; i < ng; ++i) g.add_node(node(i, "x", Vec3(2 * u(rng), 2 * u(rng), 0), 1, testgen::unit_vec(4, rng)));
    const Matching m = match_nodes(l, g, p);
    const auto [card, cost] = brute_match(l, g, p);
    CHECK(int(m.pairs.size()) == card);
    CHECK(std::abs(m.total_cost - cost) < 1e-9);
  }
}

TEST_CASE("discrepancy properties on random pairs") {
  const DiscrepancyParams p;
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const auto gp = testgen::random_pair(rng);
    const Matching m = match_nodes(gp.local, gp.global, p, &gp.in_view);
    const auto b = discrepancy_breakdown(gp.local, gp.global, m, p);
    CHECK(std::abs(b.total - oracle::total_discrepancy(gp.local, gp.global, m, p)) < 1e-12);
    CHECK(b.relational_term >= 0.0);
    CHECK(b.relational_term <= p.w_rel + 1e-15);
    for (auto [l, g] : m.pairs) CHECK(node_discrepancy(gp.local.node(l), gp.global.node(g), p) >= 0.0);
  }
}

TEST_CASE("low reliability suppresses the node term") {
  DiscrepancyParams p;
  p.delta_unmatched = 2.0;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    SceneGraph l, g;
    for (int i = 0; i < 4; ++i) {
      const Vec3 c(4 * u(rng), 4 * u(rng), 0);
      g.add_node(node(i, "x", c));
      const double ang = 2 * kPi * u(rng);
      l.add_node(node(i, "x", c + 2 * u(rng) * Vec3(std::cos(ang), std::sin(ang), 0), 0.1 * u(rng)));
    }
    const Matching m = match_nodes(l, g, p);
    CHECK(discrepancy_breakdown(l, g, m, p).node_term <= 0.2 + 1e-12);
  }
}

TEST_CASE("affected region and patch examples") {
  const DiscrepancyParams p;
  SceneGraph g;
  g.add_node(node(0, "table", Vec3(0, 0, 0.4)));
  g.add_node(node(1, "mug", Vec3(0, 0, 0.8)));
  g.add_node(node(2, "lamp", Vec3(0.6, 0, 0.8)));
  g.add_edge({1, kOnLabel, 0});
  g.add_edge({1, kNextToLabel, 2});

  auto m = match_nodes(g, g, p);
  CHECK(affected_region(g, g, m, p).empty());
  CHECK(patch_graph(g, affected_region(g, g, m, p), g) == g);

  // lamp moved 2 m: matched beyond the gate is impossible, so it shows up as
  // an unmatched pair; a 0.8 m move stays matched with delta > tau.
  SceneGraph l = g;
  l.mutable_node(2).centroid = Vec3(1.4, 0, 0.8);
  l.remove_edge({1, kNextToLabel, 2});
  m = match_nodes(l, g, p);
  auto r = affected_region(l, g, m, p);
  CHECK(r.global_nodes == std::set<NodeId>{2});
  CHECK(r.local_nodes == std::set<NodeId>{2});
  CHECK(r.global_edges == std::set<Edge>{{1, kNextToLabel, 2}});
  SceneGraph out = patch_graph(g, r, l);
  CHECK(out.node(2).centroid == Vec3(1.4, 0, 0.8));
  CHECK(out.node(0) == g.node(0));
  CHECK(out.node(1) == g.node(1));
  CHECK(out.edges().count({1, kOnLabel, 0}) == 1);
  CHECK(out.edges().count({1, kNextToLabel, 2}) == 0);

  // mug removed
  SceneGraph gone = g;
  gone.remove_node(1);
  const std::set<NodeId> view{0, 1, 2};
  m = match_nodes(gone, g, p, &view);
  r = affected_region(gone, g, m, p);
  CHECK(r.global_nodes == std::set<NodeId>{1});
  out = patch_graph(g, r, gone);
  CHECK(out.node_count() == g.node_count() - 1);
  CHECK(!out.has_node(1));
  CHECK(out.edge_count() == 0);

  AffectedRegion bogus;
  bogus.global_nodes.insert(99);
  CHECK_THROWS_AS(patch_graph(g, bogus, l), InvalidRegion);
}

TEST_CASE("patch is local and idempotent on random pairs") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 300; ++trial) {
    const auto gp = testgen::random_pair(rng);
    const auto once = testgen::update(gp.global, gp.local, gp.in_view);
    for (const auto& [id, n] : gp.global.nodes()) {
      if (!once.region.global_nodes.count(id)) {
        REQUIRE(once.patched.has_node(id));
        CHECK(once.patched.node(id) == n);
      }
    }
    for (const auto& e : gp.global.edges()) {
      if (!once.region.global_nodes.count(e.src) && !once.region.global_nodes.count(e.dst)) {
        CHECK(once.patched.edges().count(e) == 1);
      }
    }
    const auto twice = testgen::update(once.patched, gp.local, testgen::view_after(gp.global, once.patched, gp.in_view));
    CHECK(twice.patched == once.patched);
  }
}

TEST_CASE("query target") {
  SceneGraph g;
  g.add_node(node(3, "mug", Vec3(0, 0, 0)));
  g.add_node(node(5, "mug", Vec3(1, 0, 0)));
  g.add_node(node(7, "table", Vec3(1, 0, 0)));
  g.add_edge({5, kOnLabel, 7});
  GraphNode k = node(9, "plant", Vec3(2, 0, 0));
  k.room = "kitchen";
  g.add_node(k);

  CHECK(query_target(g, {"office", "", "mug"}).id == 3);
  CHECK(query_target(g, {"office", "table", "mug"}).id == 5);
  CHECK(query_target(g, {"kitchen", "", "plant"}).id == 9);
  CHECK_THROWS_AS(query_target(g, {"office", "", "plant"}), TargetNotFound);
}

TEST_CASE("graph documents round-trip") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gp = testgen::random_pair(rng);
    const std::string text = graph_to_json(gp.global);
    const SceneGraph back = graph_from_json(text);
    CHECK(graph_to_json(back) == text);
    CHECK(back.node_count() == gp.global.node_count());
    CHECK(back.edges() == gp.global.edges());
  }
  CHECK_THROWS_AS(graph_from_json("{\"nodes\": ["), ParseError);
}
