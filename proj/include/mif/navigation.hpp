#pragma once

// Grid planning and pure-pursuit tracking with error-scaled velocity and
// velocity-scaled lookahead.

#include <cstdint>
#include <span>
#include <vector>

#include "mif/common.hpp"

namespace mif {

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  /// `origin` is the world position of the lower-left corner of cell (0, 0).
  OccupancyGrid(Vec2 origin, double resolution, int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }

  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < width_ && j < height_; }
  bool occupied(int i, int j) const { return cells_[index(i, j)] != 0; }
  void set(int i, int j, bool occ) { cells_[index(i, j)] = occ ? 1 : 0; }

  /// Cell containing a world point (may be out of bounds).
  std::pair<int, int> cell_of(const Vec2& p) const;
  Vec2 center(int i, int j) const;
  /// True for points outside the grid or in an occupied cell.
  bool blocked(const Vec2& p) const;

  /// Marks every cell whose centre falls in the axis-aligned rectangle.
  void fill_rect(const Vec2& lo, const Vec2& hi);
  /// Occupies every cell whose centre lies within `radius` of an occupied centre.
  OccupancyGrid inflated(double radius) const;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * width_ + i; }

  Vec2 origin_ = Vec2::Zero();
  double resolution_ = 0.1;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct PlannedPath {
  std::vector<Vec2> waypoints;  // shortcut polyline, start -> goal
  std::vector<Vec2> grid_path;  // raw cell-centre path
  double grid_cost = 0.0;       // 8-connected cost of the raw path, metres

  double length() const;
};

/// 8-connected shortest path (diagonal cost sqrt 2, no corner cutting) on the
/// grid inflated by `inflation`, then greedy line-of-sight shortcutting.
/// The start cell is always treated as free. Throws NoPath.
PlannedPath plan_path(const OccupancyGrid& grid, const Vec2& start, const Vec2& goal, double inflation);

/// True when every sample along the segment (quarter-cell spacing) is free.
bool line_of_sight(const OccupancyGrid& grid, const Vec2& a, const Vec2& b);

/// Nearest free cell centre to `p` (ties by scan order); throws NoPath if none.
Vec2 nearest_free(const OccupancyGrid& grid, const Vec2& p);

struct TrackingParams {
  double L0 = 0.4;          // m
  double L_min = 0.3;       // m
  double L_max = 1.0;       // m
  double k_v = 1.0;         // s
  double v_max = 0.5;       // m/s
  double k_theta = 4.0;     // 1/rad
  double delta_arrival = 0.3;
  double turn_rate = 0.8;   // rad/s, in-place rotation when v is floored to 0
  double v_stall = 0.05;    // m/s; slower commands turn in place instead of creeping

  void validate() const;
};

struct VelocityCommand {
  double v = 0.0;
  double lookahead = 0.0;
};

/// v = v_max * max(0, 1 - k_theta |dtheta|); L = clamp(L0 + k_v v, L_min, L_max).
VelocityCommand adaptive_velocity(double delta_theta, const TrackingParams& params);

struct TrackingStep {
  double v = 0.0;
  double omega = 0.0;
  double kappa = 0.0;
  double delta_theta = 0.0;
  double lookahead = 0.0;
  Vec2 lookahead_point = Vec2::Zero();
};

/// Goal point: the first point past the closest path point (arc s0) whose
/// distance from p reaches L; the path end when none does.
Vec2 goal_point(std::span<const Vec2> path, const Vec2& p, double s0, double L);

/// Pure-pursuit step: kappa = 2 sin(dtheta) / L, omega = v kappa. The speed
/// comes from the heading error towards the goal point at L0; the reported
/// (dtheta, L) pair is taken at the velocity-scaled lookahead L(v). Below
/// v_stall the robot turns in place at turn_rate (the reported pair is then
/// the L0 one). Throws NoPath on an empty path.
TrackingStep pure_pursuit_step(const Pose2& pose, std::span<const Vec2> path, const TrackingParams& params);

/// Exact unicycle integration over dt (straight line when |omega| < 1e-9).
Pose2 step_unicycle(const Pose2& pose, double v, double omega, double dt);

/// Distance from p to the polyline, and the arc length of the closest point.
double distance_to_path(std::span<const Vec2> path, const Vec2& p, double* arc = nullptr);

/// Point at arc length s along the polyline (clamped to its ends).
Vec2 point_at_arc(std::span<const Vec2> path, double s);

double path_length(std::span<const Vec2> path);

}  // namespace mif
