#pragma once

// Interaction Pose Safety: collision clearance, reach feasibility and static
// stability for a planar stance, plus a ring search that nudges an unsafe
// stance into a safe one.

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "mif/common.hpp"
#include "mif/mesh.hpp"

namespace mif {

struct Sphere {
  Vec3 center = Vec3::Zero();  // base-frame offset (or world position once posed)
  double radius = 0.0;
};

/// Foot contact rectangle, axis-aligned in the base frame.
struct FootRect {
  double length = 0.22;  // along heading
  double width = 0.10;
  Vec2 offset = Vec2::Zero();
};

struct StancePose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  std::vector<Sphere> body;
  std::array<FootRect, 2> feet;
  Vec3 com_offset = Vec3(0.0, 0.0, 0.9);

  /// Humanoid-scale proxy used when a scenario does not define one.
  static StancePose with_default_body(double x, double y, double heading);

  Vec3 to_world(const Vec3& offset) const;
  Vec3 com() const { return to_world(com_offset); }
};

struct ReachModel {
  Vec3 shoulder_offset = Vec3(0.15, 0.0, 1.05);
  double r_min = 0.25;
  double r_max = 0.85;

  void validate() const;
};

/// Body spheres transformed to the world frame.
std::vector<Sphere> posed_body(const StancePose& pose);

/// Largest horizontal extent of the body from the base axis (sphere offset + radius).
double body_circumscribed_radius(const StancePose& pose);

/// min over spheres of signed_distance(center) - radius.
double min_clearance(std::span<const Sphere> world_spheres, const MeshDistance& mesh);
double min_clearance(std::span<const Sphere> world_spheres, const TriangleMesh& mesh);

bool check_collision(const StancePose& pose, const MeshDistance& mesh, double delta_safe = 0.05);

Vec3 shoulder_position(const StancePose& pose, const ReachModel& reach);

/// Reach annulus plus a sampled (1 cm) clearance check of the straight segment
/// shoulder -> target, ignoring the last 5 cm before the target.
bool check_reach(const StancePose& pose, const Vec3& t_obj, const ReachModel& reach,
                 const MeshDistance& mesh);

/// Convex hull of both foot rectangles in world (x, y), counter-clockwise.
std::vector<Vec2> support_polygon(const StancePose& pose);

/// Distance from `point` to the nearest hull edge line, positive inside.
/// Throws DegenerateSupport for a zero-area hull.
double support_depth(std::span<const Vec2> hull, const Vec2& point);

inline constexpr double kSupportShrink = 0.02;

/// True iff com's projection lies strictly inside the hull eroded by 2 cm.
bool check_stability(const StancePose& pose, const Vec3& com);

struct IpsDiagnostics {
  bool i_col = false;
  bool i_ik = false;
  bool i_stab = false;
  double clearance_m = 0.0;
  double reach_m = 0.0;             // shoulder-to-target distance
  double stability_margin_m = 0.0;  // depth inside the eroded polygon

  bool safe() const { return i_col && i_ik && i_stab; }
};

IpsDiagnostics ips(const StancePose& pose, const MeshDistance& mesh, const Vec3& t_obj,
                   const ReachModel& reach, double delta_safe = 0.05);

struct MicroAdjustOptions {
  std::vector<double> ring_radii = {0.1, 0.2, 0.3, 0.4, 0.5};
  int ring_positions = 16;
  int max_candidates = 81;  // input pose + 5 rings x 16
  double delta_safe = 0.05;
  /// Optional extra filter (e.g. the candidate must stand on free floor).
  std::function<bool(const StancePose&)> admissible;
};

/// Tries the input pose, then ring positions around it (heading facing the
/// target) in a fixed order; returns the first IPS-valid one.
/// Throws NoFeasibleStance when the budget runs out.
StancePose micro_adjust_stance(const StancePose& initial, const MeshDistance& mesh,
                               const Vec3& t_obj, const ReachModel& reach,
                               const MicroAdjustOptions& options = {});

/// Stance at (x, y) oriented towards the target's planar position.
StancePose face_target(StancePose pose, const Vec3& t_obj);

}  // namespace mif
