#pragma once

// Scene-graph memory: graph construction from detections, local/global node
// association, discrepancy scoring, affected-region extraction and local
// patching.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mif/common.hpp"

namespace mif {

using NodeId = std::int64_t;

struct GraphNode {
  NodeId id = 0;
  std::string caption;
  std::string room;
  Vec3 centroid = Vec3::Zero();
  double reliability = 1.0;  // Omega in [0, 1]
  VecX feature;              // unit-norm latent

  bool operator==(const GraphNode& other) const;
};

struct Edge {
  NodeId src = 0;
  std::string label;
  NodeId dst = 0;

  auto operator<=>(const Edge&) const = default;
  bool operator==(const Edge&) const = default;
};

inline constexpr const char* kOnLabel = "on";
inline constexpr const char* kNextToLabel = "next_to";

/// next_to is stored with src < dst.
bool is_symmetric_label(const std::string& label);
Edge canonical_edge(Edge e);

class SceneGraph {
 public:
  void add_node(GraphNode node);
  /// Removes the node and all incident edges. Returns false if absent.
  bool remove_node(NodeId id);
  /// Throws std::invalid_argument when an endpoint is missing.
  void add_edge(Edge e);
  bool remove_edge(const Edge& e);

  bool has_node(NodeId id) const { return nodes_.count(id) > 0; }
  const GraphNode& node(NodeId id) const;
  GraphNode& mutable_node(NodeId id);
  const std::map<NodeId, GraphNode>& nodes() const { return nodes_; }
  const std::set<Edge>& edges() const { return edges_; }
  const std::set<std::string>& rooms() const { return rooms_; }
  void add_room(const std::string& room) { rooms_.insert(room); }

  std::vector<Edge> incident_edges(NodeId id) const;
  NodeId next_id() const { return nodes_.empty() ? 0 : nodes_.rbegin()->first + 1; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  bool operator==(const SceneGraph& other) const = default;

 private:
  std::map<NodeId, GraphNode> nodes_;
  std::set<Edge> edges_;
  std::set<std::string> rooms_;
};

/// Object evidence handed to graph construction.
struct Detection {
  std::string category;
  std::string room;
  Vec3 centroid = Vec3::Zero();
  Vec3 extent = Vec3::Zero();  // world axis-aligned size, metres
  VecX feature;
  std::vector<double> support_confidence;
  std::optional<std::int64_t> object_id;  // oracle label, diagnostics only
};

struct EdgePredicates {
  double next_to_radius = 1.0;      // horizontal centroid distance
  double on_vertical_tolerance = 0.2;
  double on_footprint_margin = 0.05;
};

/// One node per detection (ids 0..n-1 in input order), Omega from the
/// supporting confidences, and deterministic "on" / "next_to" edges.
SceneGraph build_local_graph(std::span<const Detection> detections,
                             const EdgePredicates& predicates = {});

struct DiscrepancyParams {
  double w_pos = 1.0;
  double w_sem = 0.5;
  double w_rel = 0.8;
  double tau = 0.45;
  double gate_radius = 1.0;
  double delta_unmatched = 1.0;
  int persistence_ticks = 3;

  void validate() const;
};

struct Matching {
  std::vector<std::pair<NodeId, NodeId>> pairs;  // (local, global), sorted by local id
  std::vector<NodeId> unmatched_local;
  std::vector<NodeId> unmatched_global;  // restricted to the in-view set
  double total_cost = 0.0;
};

double association_cost(const GraphNode& local, const GraphNode& global,
                        const DiscrepancyParams& params);

/// Maximum-cardinality one-to-one association with minimum total cost; pairs
/// farther apart than gate_radius are forbidden. `global_in_view` restricts
/// which unassigned global nodes are reported (nullptr: all of them).
Matching match_nodes(const SceneGraph& local, const SceneGraph& global,
                     const DiscrepancyParams& params,
                     const std::set<NodeId>* global_in_view = nullptr);

/// Omega_local * (w_pos * |dc| + w_sem * (1 - cos)). Throws NormalizationError
/// for features that are not unit length.
double node_discrepancy(const GraphNode& local, const GraphNode& global,
                        const DiscrepancyParams& params);

struct DiscrepancyBreakdown {
  double node_term = 0.0;
  double relational_term = 0.0;
  double total = 0.0;
  std::size_t symmetric_difference = 0;
  std::size_t edge_union = 0;
};

/// Node term averaged over its contributions (matched pairs, unmatched local
/// nodes at delta_unmatched * Omega, unmatched in-view global nodes at
/// delta_unmatched * mean local Omega) plus w_rel times the Jaccard distance
/// between the local edges and the global edges among observed nodes, with
/// node identity resolved through the matching. Zero when the local graph is
/// empty.
DiscrepancyBreakdown discrepancy_breakdown(const SceneGraph& local, const SceneGraph& global,
                                           const Matching& matching,
                                           const DiscrepancyParams& params);
double total_discrepancy(const SceneGraph& local, const SceneGraph& global,
                         const Matching& matching, const DiscrepancyParams& params);

struct AffectedRegion {
  std::set<NodeId> local_nodes;
  std::set<NodeId> global_nodes;
  std::set<Edge> local_edges;
  std::set<Edge> global_edges;
  /// Matching used to derive the region (local -> global for every pair).
  std::map<NodeId, NodeId> local_to_global;

  bool empty() const { return local_nodes.empty() && global_nodes.empty(); }
};

AffectedRegion affected_region(const SceneGraph& local, const SceneGraph& global,
                               const Matching& matching, const DiscrepancyParams& params);

/// Replaces the region with local evidence: matched region nodes take the
/// local centroid / feature / reliability, unmatched global region nodes are
/// deleted, unmatched local region nodes are inserted under fresh ids, and
/// edges incident to region nodes are rebuilt from the evidence. Everything
/// outside the region is left untouched. Throws InvalidRegion on unknown ids.
SceneGraph patch_graph(const SceneGraph& global, const AffectedRegion& region,
                       const SceneGraph& local_evidence);

/// Global id each region-local node ends up with after patch_graph (matched
/// nodes keep their global id; inserted nodes get fresh ids in local-id order).
std::map<NodeId, NodeId> patched_ids(const SceneGraph& global, const AffectedRegion& region);

struct Query {
  std::string region;
  std::string landmark;  // may be empty
  std::string object;
};

/// Room filter, caption match, landmark adjacency (preferred when any
/// candidate satisfies it), then feature similarity to `object_feature` if
/// given, ties to the lowest id. Throws TargetNotFound.
const GraphNode& query_target(const SceneGraph& graph, const Query& query,
                              const VecX* object_feature = nullptr);

// Serialization: {"rooms": [...], "nodes": [...], "edges": [...]}.
std::string graph_to_json(const SceneGraph& graph);
SceneGraph graph_from_json(const std::string& text);
SceneGraph load_graph(const std::string& path);
void save_graph(const std::string& path, const SceneGraph& graph);

}  // namespace mif
