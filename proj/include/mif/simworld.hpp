#pragma once

// Deterministic desk-scale world: ground-truth objects with meshes, scripted
// relocate/remove/add events, and an oracle observation model whose primitive
// instability grows with walking speed and path curvature.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mif/appearance.hpp"
#include "mif/common.hpp"
#include "mif/geometry.hpp"
#include "mif/ips.hpp"
#include "mif/mesh.hpp"
#include "mif/navigation.hpp"
#include "mif/spatial.hpp"

namespace mif {

inline constexpr int kLatentDim = 32;

struct ObjectPose {
  Vec3 position = Vec3::Zero();  // base centre (bottom of the mesh) in world
  double yaw = 0.0;

  bool operator==(const ObjectPose&) const = default;
};

struct ObjectSpec {
  std::int64_t id = 0;
  std::string category;
  std::string room;
  ObjectPose pose;
  std::string mesh;  // "primitive:box sx sy sz", "primitive:cylinder r h [segments]" or a relative path
  std::optional<double> height;
  bool structural = false;  // walls: occlude and block, never detected

  bool operator==(const ObjectSpec&) const = default;
};

struct Room {
  std::string name;
  std::vector<Vec2> polygon;

  bool contains(const Vec2& p) const;
  bool operator==(const Room&) const = default;
};

enum class EventKind { kRelocate, kRemove, kAdd };
std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

struct SceneEvent {
  int tick = 0;
  EventKind kind = EventKind::kRemove;
  std::int64_t object_id = 0;
  std::optional<ObjectPose> new_pose;  // relocate
  std::optional<ObjectSpec> object;    // add

  bool operator==(const SceneEvent&) const = default;
};

/// Instability model. The per-primitive statistic is
///   g = (amp0 + k_speed v + k_curv |kappa|) * (1 + noise_rel |n|) * spike
/// with spike drawn from [spike_min, spike_max] with probability spike_prob
/// (1 otherwise), so a motionless robot with amp0 = 0 yields g = 0.
struct JitterModel {
  double amp0 = 0.04;
  double k_speed = 0.08;
  double k_curv = 0.04;
  double noise_rel = 0.1;
  double spike_prob = 0.1;
  double spike_min = 6.0;
  double spike_max = 12.0;
  double pos_noise_base = 0.002;  // m
  double pos_noise_gain = 0.1;    // m per unit g
  double feature_noise = 0.05;
  double feature_noise_gain = 1.0;
  double shift_gain = 0.2;        // per-tick viewpoint shift, m per (m/s * 1/m)
  double spurious_prob = 0.02;    // single-tick phantom detections
  std::uint64_t noise_seed = 0;

  void validate() const;
  double base_instability(double v, double kappa) const;
  /// Torso oscillation amplitude proxy, proportional to v |kappa|.
  double oscillation(double v, double kappa) const { return shift_gain * v * std::abs(kappa); }
  bool operator==(const JitterModel&) const = default;
};

struct CameraModel {
  double height = 1.3;
  double range = 4.0;
  double half_fov = 0.96;  // rad
  int primitives_per_object = 48;
  int dense_primitives = 160;
  double view_margin_range = 0.3;
  double view_margin_angle = 0.17;

  bool operator==(const CameraModel&) const = default;
};

struct SimParams {
  double dt = 0.2;
  int max_ticks = 400;
  double mapping_speed = 0.3;
  double grid_resolution = 0.1;
  int max_updates = 4;
  double scan_radius = 1.5;
  int scan_poses = 8;
  double merge_radius = 0.5;
  int retry_budget = 5;
  double mesh_sigma = 0.003;
  double neighbor_radius = 1.5;
  double success_radius = 1.0;
  int viewpoint_samples = 16;
  double viewpoint_radius = 1.0;

  bool operator==(const SimParams&) const = default;
};

struct IpsParams {
  double delta_safe = 0.05;
  double registration_margin = 0.03;  // extra clearance demanded while searching stances
  bool operator==(const IpsParams&) const = default;
};

struct ScenarioParams {
  ConfidenceParams confidence;
  DiscrepancyParams discrepancy;
  TrackingParams tracking;
  IpsParams ips;
  JitterModel jitter;
  CameraModel camera;
  SimParams sim;
};

struct RobotSpec {
  Pose2 start;
  StancePose stance = StancePose::with_default_body(0.0, 0.0, 0.0);  // body, feet, com template
  ReachModel reach;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Room> rooms;
  std::vector<ObjectSpec> objects;
  std::vector<SceneEvent> events;
  RobotSpec robot;
  Query query;
  ScenarioParams params;
  std::string base_dir;  // resolves relative mesh paths
};

/// Parses a scenario document. Schema violations throw ParseError naming the
/// field path (and the line for syntax errors).
Scenario parse_scenario(const std::string& text, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);
/// Canonical document; parse_scenario(scenario_to_json(s)) reproduces s.
std::string scenario_to_json(const Scenario& scenario);
bool same_scenario(const Scenario& a, const Scenario& b);

/// Resolves a mesh reference (primitive spec or path relative to base_dir).
TriangleMesh resolve_mesh(const std::string& ref, const std::string& base_dir);

/// Unit prototype for a category plus a seeded per-instance perturbation.
VecX category_prototype(const std::string& category);
VecX instance_feature(const std::string& category, std::uint64_t seed, std::int64_t object_id);

struct WorldObject {
  ObjectSpec spec;
  VecX feature;              // unit latent
  TriangleMesh world_mesh;   // posed ground truth
  Vec3 centroid = Vec3::Zero();
  Vec3 extent = Vec3::Zero();
};

struct ObservedObject {
  std::optional<std::int64_t> object_id;  // empty for phantom detections
  std::string category;
  std::string room;
  Vec3 extent = Vec3::Zero();
  std::vector<GaussianPrimitive> primitives;
};

struct Observation {
  std::vector<ObservedObject> objects;
};

class World {
 public:
  explicit World(const Scenario& scenario);

  const std::map<std::int64_t, WorldObject>& objects() const { return objects_; }
  bool present(std::int64_t id) const { return objects_.count(id) > 0; }
  bool ever_existed(std::int64_t id) const { return known_ids_.count(id) > 0; }
  const WorldObject& object(std::int64_t id) const;
  const AssetTable& assets() const { return assets_; }
  const std::vector<SceneEvent>& history() const { return history_; }
  const std::vector<Room>& rooms() const { return rooms_; }
  std::uint64_t seed() const { return seed_; }

  void apply_event(const SceneEvent& event);  // EventError
  void apply_events_at(int tick, const std::vector<SceneEvent>& script);

  /// Merged wall meshes (null when the world has none).
  const MeshDistance* structural() const { return structural_.get(); }
  const std::vector<TriangleMesh>& structural_meshes() const { return structural_meshes_; }

  /// True when the segment is blocked by a structural mesh.
  bool occluded(const Vec3& from, const Vec3& to) const;

  std::string room_of(const Vec2& p) const;
  /// Floor-level obstacles (walls, furniture standing on the floor) and
  /// everything outside the rooms.
  OccupancyGrid floor_grid(double resolution) const;
  /// Every present object plus the walls, subdivided `levels` times.
  TriangleMesh scene_mesh(int levels = 0) const;

 private:
  WorldObject make_object(const ObjectSpec& spec);

  std::uint64_t seed_ = 0;
  std::string base_dir_;
  std::vector<Room> rooms_;
  std::map<std::int64_t, WorldObject> objects_;
  std::map<std::string, TriangleMesh> mesh_cache_;
  std::set<std::int64_t> known_ids_;
  AssetTable assets_;
  std::vector<SceneEvent> history_;
  std::vector<TriangleMesh> structural_meshes_;
  std::shared_ptr<MeshDistance> structural_;
};

/// Camera position for a planar pose.
Vec3 camera_position(const Pose2& pose, const CameraModel& camera);

/// Range/wedge test only (no occlusion), with optional margins that shrink it.
bool in_fov(const Pose2& pose, const Vec3& point, const CameraModel& camera, double range_margin = 0.0,
            double angle_margin = 0.0);

/// Primitives for one present object seen from `pose`, with no visibility
/// test (used by the mapping pass, which stands in for offline reconstruction).
ObservedObject observe_object(const World& world, std::int64_t object_id, const Pose2& pose, double v,
                              double kappa, const JitterModel& jitter, std::uint64_t stream_seed,
                              int primitives);

/// Oracle sensing: detects every non-structural object inside the view wedge
/// with an unobstructed line of sight, and draws noisy primitives for it.
Observation observe(const World& world, const Pose2& pose, double v, double kappa,
                    const JitterModel& jitter, const CameraModel& camera, std::uint64_t stream_seed,
                    int primitives_per_object);

struct Adjudication {
  bool success = false;
  std::string reason;
};

enum class TaskOutcome { kArrived, kRemovedReport, kFailed };

/// Present object answering the query (category and room, lowest id).
std::optional<std::int64_t> ground_truth_target(const World& world, const Query& query);

/// Success iff (arrived with the stance within `success_radius` (planar) of
/// the current ground-truth centroid and IPS-valid against ground truth) or
/// (removal reported and no object answering the query is present).
Adjudication adjudicate(const World& world, const Query& query, TaskOutcome outcome,
                        const StancePose* stance, const ReachModel& reach, const ScenarioParams& params);

/// Top-centre of a mesh's bounding box (the reach target on an object).
Vec3 top_center(const TriangleMesh& mesh);

}  // namespace mif
