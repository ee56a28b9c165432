#include "mif/spatial.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "mif/appearance.hpp"
#include "mif/assignment.hpp"

namespace mif {

namespace {

constexpr double kUnitTolerance = 1e-6;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void require_unit(const VecX& f, const char* what) {
  if (f.size() == 0 || std::abs(f.norm() - 1.0) > kUnitTolerance) {
    throw NormalizationError(std::string(what) + " feature is not unit-norm");
  }
}

// 1 - cos(a, b), written as half the squared chord between the normalised
// vectors so that identical features give exactly zero.
double cosine_distance(const VecX& a, const VecX& b) {
  if (a.size() != b.size()) throw DimensionMismatch("feature dimensions differ");
  return 0.5 * (a.normalized() - b.normalized()).squaredNorm();
}

}  // namespace

bool GraphNode::operator==(const GraphNode& o) const {
  return id == o.id && caption == o.caption && room == o.room && centroid == o.centroid &&
         reliability == o.reliability && feature.size() == o.feature.size() &&
         feature == o.feature;
}

bool is_symmetric_label(const std::string& label) { return label == kNextToLabel; }

Edge canonical_edge(Edge e) {
  if (is_symmetric_label(e.label) && e.dst < e.src) std::swap(e.src, e.dst);
  return e;
}

void SceneGraph::add_node(GraphNode node) {
  if (!node.room.empty()) rooms_.insert(node.room);
  const NodeId id = node.id;
  nodes_[id] = std::move(node);
}

bool SceneGraph::remove_node(NodeId id) {
  if (nodes_.erase(id) == 0) return false;
  std::erase_if(edges_, [id](const Edge& e) { return e.src == id || e.dst == id; });
  return true;
}

void SceneGraph::add_edge(Edge e) {
  if (!has_node(e.src) || !has_node(e.dst)) {
    throw std::invalid_argument("edge endpoint missing: " + std::to_string(e.src) + " " + e.label +
                                " " + std::to_string(e.dst));
  }
  edges_.insert(canonical_edge(std::move(e)));
}

bool SceneGraph::remove_edge(const Edge& e) { return edges_.erase(canonical_edge(e)) > 0; }

const GraphNode& SceneGraph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("no graph node " + std::to_string(id));
  return it->second;
}

GraphNode& SceneGraph::mutable_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("no graph node " + std::to_string(id));
  return it->second;
}

std::vector<Edge> SceneGraph::incident_edges(NodeId id) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.src == id || e.dst == id) out.push_back(e);
  }
  return out;
}

SceneGraph build_local_graph(std::span<const Detection> detections,
                             const EdgePredicates& predicates) {
  SceneGraph g;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    GraphNode n;
    n.id = static_cast<NodeId>(i);
    n.caption = d.category;
    n.room = d.room;
    n.centroid = d.centroid;
    n.reliability = d.support_confidence.empty() ? 0.0 : node_reliability(d.support_confidence);
    n.feature = d.feature;
    g.add_node(std::move(n));
  }

  auto rests_on = [&](const Detection& upper, const Detection& lower) {
    const Vec3 d = upper.centroid - lower.centroid;
    if (std::abs(d.x()) > 0.5 * lower.extent.x() + predicates.on_footprint_margin) return false;
    if (std::abs(d.y()) > 0.5 * lower.extent.y() + predicates.on_footprint_margin) return false;
    const double bottom = upper.centroid.z() - 0.5 * upper.extent.z();
    const double top = lower.centroid.z() + 0.5 * lower.extent.z();
    return upper.centroid.z() > lower.centroid.z() &&
           std::abs(bottom - top) <= predicates.on_vertical_tolerance;
  };

  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = i + 1; j < detections.size(); ++j) {
      const auto& a = detections[i];
      const auto& b = detections[j];
      const auto ia = static_cast<NodeId>(i);
      const auto ib = static_cast<NodeId>(j);
      if (rests_on(a, b)) {
        g.add_edge({ia, kOnLabel, ib});
      } else if (rests_on(b, a)) {
        g.add_edge({ib, kOnLabel, ia});
      } else if ((a.centroid - b.centroid).head<2>().norm() < predicates.next_to_radius) {
        g.add_edge({ia, kNextToLabel, ib});
      }
    }
  }
  return g;
}

void DiscrepancyParams::validate() const {
  if (w_pos < 0 || w_sem < 0 || w_rel < 0) {
    throw std::invalid_argument("discrepancy weights must be non-negative");
  }
  if (!(tau > 0)) throw std::invalid_argument("discrepancy tau must be positive");
  if (!(gate_radius > 0)) throw std::invalid_argument("gate_radius must be positive");
  if (delta_unmatched < 0) throw std::invalid_argument("delta_unmatched must be non-negative");
  if (persistence_ticks < 1) throw std::invalid_argument("persistence_ticks must be >= 1");
}

double association_cost(const GraphNode& local, const GraphNode& global,
                        const DiscrepancyParams& params) {
  return params.w_pos * (local.centroid - global.centroid).norm() +
         params.w_sem * cosine_distance(local.feature, global.feature);
}

Matching match_nodes(const SceneGraph& local, const SceneGraph& global,
                     const DiscrepancyParams& params, const std::set<NodeId>* global_in_view) {
  std::vector<const GraphNode*> ln;
  std::vector<const GraphNode*> gn;
  for (const auto& [id, n] : local.nodes()) ln.push_back(&n);
  for (const auto& [id, n] : global.nodes()) gn.push_back(&n);
  const int nl = static_cast<int>(ln.size());
  const int ng = static_cast<int>(gn.size());

  // Square embedding: real pairs, then "leave unassigned" slots. One skip costs
  // more than any full set of admissible pairs, so cardinality is maximised
  // first and cost minimised among maximum matchings.
  const double max_pair = params.w_pos * params.gate_radius + 2.0 * params.w_sem;
  const double skip = (std::min(nl, ng) + 1) * max_pair + 1.0;
  const double forbidden = 1e9;
  const int n = nl + ng;
  MatX cost = MatX::Zero(n, n);
  for (int i = 0; i < nl; ++i) {
    for (int j = 0; j < ng; ++j) {
      const bool gated = (ln[i]->centroid - gn[j]->centroid).norm() > params.gate_radius;
      cost(i, j) = gated ? forbidden : association_cost(*ln[i], *gn[j], params);
    }
    for (int j = ng; j < n; ++j) cost(i, j) = (j - ng == i) ? skip : forbidden;
  }
  for (int i = nl; i < n; ++i) {
    for (int j = 0; j < ng; ++j) cost(i, j) = (i - nl == j) ? skip : forbidden;
    // dummy-dummy slots cost nothing
  }

  Matching m;
  std::vector<char> global_used(ng, 0);
  const std::vector<int> assign = solve_assignment(cost);
  for (int i = 0; i < nl; ++i) {
    const int j = assign[i];
    if (j < ng && cost(i, j) < forbidden) {
      m.pairs.emplace_back(ln[i]->id, gn[j]->id);
      m.total_cost += cost(i, j);
      global_used[j] = 1;
    } else {
      m.unmatched_local.push_back(ln[i]->id);
    }
  }
  for (int j = 0; j < ng; ++j) {
    if (global_used[j]) continue;
    if (global_in_view && !global_in_view->count(gn[j]->id)) continue;
    m.unmatched_global.push_back(gn[j]->id);
  }
  return m;
}

double node_discrepancy(const GraphNode& local, const GraphNode& global,
                        const DiscrepancyParams& params) {
  require_unit(local.feature, "local");
  require_unit(global.feature, "global");
  return local.reliability * association_cost(local, global, params);
}

namespace {

// Edge endpoint in the merged id space: global ids for matched or global
// nodes, tagged local ids for unmatched local nodes.
struct Endpoint {
  bool local = false;
  NodeId id = 0;
  auto operator<=>(const Endpoint&) const = default;
};

struct ResolvedEdge {
  Endpoint src;
  std::string label;
  Endpoint dst;
  auto operator<=>(const ResolvedEdge&) const = default;
};

ResolvedEdge canonical(ResolvedEdge e) {
  if (is_symmetric_label(e.label) && e.dst < e.src) std::swap(e.src, e.dst);
  return e;
}

}  // namespace

DiscrepancyBreakdown discrepancy_breakdown(const SceneGraph& local, const SceneGraph& global,
                                           const Matching& matching,
                                           const DiscrepancyParams& params) {
  DiscrepancyBreakdown out;
  if (local.node_count() == 0) return out;

  double node_sum = 0.0;
  for (const auto& [l, g] : matching.pairs) {
    node_sum += node_discrepancy(local.node(l), global.node(g), params);
  }
  for (NodeId l : matching.unmatched_local) {
    node_sum += params.delta_unmatched * local.node(l).reliability;
  }
  // A missed node is only as trustworthy as the view that missed it.
  double mean_omega = 0.0;
  for (const auto& [id, n] : local.nodes()) mean_omega += n.reliability;
  mean_omega /= static_cast<double>(local.node_count());
  node_sum += params.delta_unmatched * mean_omega * static_cast<double>(matching.unmatched_global.size());
  out.node_term = node_sum / static_cast<double>(local.node_count() + matching.unmatched_global.size());

  std::map<NodeId, NodeId> to_global;
  for (const auto& [l, g] : matching.pairs) to_global[l] = g;
  auto resolve = [&](NodeId l) {
    auto it = to_global.find(l);
    return it == to_global.end() ? Endpoint{true, l} : Endpoint{false, it->second};
  };

  std::set<ResolvedEdge> local_edges;
  for (const auto& e : local.edges()) {
    local_edges.insert(canonical({resolve(e.src), e.label, resolve(e.dst)}));
  }
  std::set<NodeId> observed;
  for (const auto& [l, g] : matching.pairs) observed.insert(g);
  observed.insert(matching.unmatched_global.begin(), matching.unmatched_global.end());
  std::set<ResolvedEdge> global_edges;
  for (const auto& e : global.edges()) {
    if (observed.count(e.src) && observed.count(e.dst)) {
      global_edges.insert(canonical({{false, e.src}, e.label, {false, e.dst}}));
    }
  }

  std::size_t common = 0;
  for (const auto& e : local_edges) common += global_edges.count(e);
  out.edge_union = local_edges.size() + global_edges.size() - common;
  out.symmetric_difference = out.edge_union - common;
  if (out.edge_union > 0) {
    out.relational_term = params.w_rel * static_cast<double>(out.symmetric_difference) /
                          static_cast<double>(out.edge_union);
  }
  out.total = out.node_term + out.relational_term;
  return out;
}

double total_discrepancy(const SceneGraph& local, const SceneGraph& global,
                         const Matching& matching, const DiscrepancyParams& params) {
  return discrepancy_breakdown(local, global, matching, params).total;
}

AffectedRegion affected_region(const SceneGraph& local, const SceneGraph& global,
                               const Matching& matching, const DiscrepancyParams& params) {
  AffectedRegion r;
  for (const auto& [l, g] : matching.pairs) {
    r.local_to_global[l] = g;
    if (node_discrepancy(local.node(l), global.node(g), params) > params.tau) {
      r.local_nodes.insert(l);
      r.global_nodes.insert(g);
    }
  }
  r.local_nodes.insert(matching.unmatched_local.begin(), matching.unmatched_local.end());
  r.global_nodes.insert(matching.unmatched_global.begin(), matching.unmatched_global.end());
  for (const auto& e : local.edges()) {
    if (r.local_nodes.count(e.src) || r.local_nodes.count(e.dst)) r.local_edges.insert(e);
  }
  for (const auto& e : global.edges()) {
    if (r.global_nodes.count(e.src) || r.global_nodes.count(e.dst)) r.global_edges.insert(e);
  }
  return r;
}

SceneGraph patch_graph(const SceneGraph& global, const AffectedRegion& region,
                       const SceneGraph& local_evidence) {
  for (NodeId g : region.global_nodes) {
    if (!global.has_node(g)) throw InvalidRegion("region names unknown global node " + std::to_string(g));
  }
  for (NodeId l : region.local_nodes) {
    if (!local_evidence.has_node(l)) {
      throw InvalidRegion("region names unknown local node " + std::to_string(l));
    }
  }
  for (const auto& [l, g] : region.local_to_global) {
    if (!local_evidence.has_node(l) || !global.has_node(g)) {
      throw InvalidRegion("region matching references unknown nodes");
    }
  }
  if (region.empty()) return global;

  SceneGraph out = global;
  std::set<NodeId> matched_global;
  for (const auto& [l, g] : region.local_to_global) matched_global.insert(g);

  std::map<NodeId, NodeId> id_map = region.local_to_global;
  std::set<NodeId> touched;
  for (NodeId g : region.global_nodes) {
    if (!matched_global.count(g)) {
      out.remove_node(g);
    } else {
      touched.insert(g);
      for (const auto& e : out.incident_edges(g)) out.remove_edge(e);
    }
  }
  // Fresh ids never reuse ids freed by deletions above.
  NodeId next = global.next_id();
  for (NodeId l : region.local_nodes) {
    const GraphNode& src = local_evidence.node(l);
    auto it = id_map.find(l);
    if (it != id_map.end()) {
      GraphNode& dst = out.mutable_node(it->second);
      dst.caption = src.caption;
      dst.room = src.room;
      dst.centroid = src.centroid;
      dst.reliability = src.reliability;
      dst.feature = src.feature;
      if (!src.room.empty()) out.add_room(src.room);
    } else {
      GraphNode n = src;
      n.id = next++;
      id_map[l] = n.id;
      touched.insert(n.id);
      out.add_node(std::move(n));
    }
  }
  for (const auto& e : local_evidence.edges()) {
    if (!region.local_nodes.count(e.src) && !region.local_nodes.count(e.dst)) continue;
    auto s = id_map.find(e.src);
    auto d = id_map.find(e.dst);
    if (s == id_map.end() || d == id_map.end()) continue;
    if (!out.has_node(s->second) || !out.has_node(d->second)) continue;
    out.add_edge({s->second, e.label, d->second});
  }
  return out;
}

std::map<NodeId, NodeId> patched_ids(const SceneGraph& global, const AffectedRegion& region) {
  std::map<NodeId, NodeId> out;
  NodeId next = global.next_id();
  for (NodeId l : region.local_nodes) {
    auto it = region.local_to_global.find(l);
    out[l] = it != region.local_to_global.end() ? it->second : next++;
  }
  return out;
}

const GraphNode& query_target(const SceneGraph& graph, const Query& query,
                              const VecX* object_feature) {
  const std::string room = lower(query.region);
  const std::string object = lower(query.object);
  const std::string landmark = lower(query.landmark);

  std::vector<const GraphNode*> candidates;
  for (const auto& [id, n] : graph.nodes()) {
    if (lower(n.room) == room && lower(n.caption) == object) candidates.push_back(&n);
  }
  if (candidates.empty()) {
    throw TargetNotFound("no '" + query.object + "' in room '" + query.region + "'");
  }

  if (!landmark.empty()) {
    std::vector<const GraphNode*> adjacent;
    for (const auto* c : candidates) {
      for (const auto& e : graph.incident_edges(c->id)) {
        const NodeId other = e.src == c->id ? e.dst : e.src;
        if (lower(graph.node(other).caption) == landmark) {
          adjacent.push_back(c);
          break;
        }
      }
    }
    if (!adjacent.empty()) candidates = std::move(adjacent);
  }

  const GraphNode* best = candidates.front();
  if (object_feature) {
    double best_sim = -2.0;
    for (const auto* c : candidates) {
      const double sim = c->feature.size() == object_feature->size()
                             ? c->feature.dot(*object_feature)
                             : -1.0;
      if (sim > best_sim) {  // candidates are in id order; strict > keeps lowest id
        best_sim = sim;
        best = c;
      }
    }
  }
  return *best;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson vec_json(const VecX& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(round_sig9(v[i]));
  return a;
}

}  // namespace

std::string graph_to_json(const SceneGraph& graph) {
  ojson doc;
  doc["rooms"] = ojson::array();
  for (const auto& r : graph.rooms()) doc["rooms"].push_back(r);
  doc["nodes"] = ojson::array();
  for (const auto& [id, n] : graph.nodes()) {
    ojson j;
    j["id"] = n.id;
    j["caption"] = n.caption;
    j["room"] = n.room;
    j["centroid"] = vec_json(n.centroid);
    j["reliability"] = round_sig9(n.reliability);
    j["latent"] = vec_json(n.feature);
    doc["nodes"].push_back(std::move(j));
  }
  doc["edges"] = ojson::array();
  for (const auto& e : graph.edges()) {
    doc["edges"].push_back(ojson{{"src", e.src}, {"label", e.label}, {"dst", e.dst}});
  }
  return doc.dump(2) + "\n";
}

SceneGraph graph_from_json(const std::string& text) {
  SceneGraph g;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.contains("rooms")) {
      for (const auto& r : doc.at("rooms")) g.add_room(r.get<std::string>());
    }
    for (const auto& j : doc.at("nodes")) {
      GraphNode n;
      n.id = j.at("id").get<NodeId>();
      if (g.has_node(n.id)) throw ParseError("duplicate node id " + std::to_string(n.id));
      n.caption = j.at("caption").get<std::string>();
      n.room = j.value("room", std::string());
      const auto& c = j.at("centroid");
      n.centroid = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
      n.reliability = j.at("reliability").get<double>();
      const auto& f = j.at("latent");
      n.feature.resize(static_cast<Eigen::Index>(f.size()));
      for (std::size_t i = 0; i < f.size(); ++i) n.feature[static_cast<Eigen::Index>(i)] = f[i].get<double>();
      g.add_node(std::move(n));
    }
    for (const auto& j : doc.at("edges")) {
      Edge e{j.at("src").get<NodeId>(), j.at("label").get<std::string>(), j.at("dst").get<NodeId>()};
      if (!g.has_node(e.src) || !g.has_node(e.dst)) {
        throw ParseError("edge references unknown node: " + std::to_string(e.src) + " -> " +
                         std::to_string(e.dst));
      }
      g.add_edge(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene graph document: ") + e.what());
  }
  return g;
}

SceneGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

void save_graph(const std::string& path, const SceneGraph& graph) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << graph_to_json(graph);
}

}  // namespace mif
