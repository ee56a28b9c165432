#pragma once

// Closed triangle meshes plus the distance queries the safety checks run on
// them. Meshes are validated as watertight (every undirected edge shared by
// exactly two triangles) with no degenerate faces.

#include <array>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mif/common.hpp"

namespace mif {

using Triangle = std::array<int, 3>;

class TriangleMesh {
 public:
  TriangleMesh() = default;
  /// Validates; throws TopologyError.
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  std::size_t triangle_count() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  double triangle_area(std::size_t t) const;
  Vec3 triangle_normal(std::size_t t) const;  // unit, outward for valid winding
  double surface_area() const;
  /// Enclosed volume (positive for outward winding).
  double volume() const;
  /// Volume centroid of the enclosed solid.
  Vec3 centroid() const;
  Eigen::AlignedBox3d bounds() const;

  /// Applies p -> s * R * p + t.
  TriangleMesh transformed(const Mat3& rotation, const Vec3& translation, double scale = 1.0) const;

  bool operator==(const TriangleMesh& other) const = default;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
};

/// Throws TopologyError describing the first violation.
void validate_watertight(std::span<const Vec3> vertices, std::span<const Triangle> triangles);
bool is_watertight(const TriangleMesh& mesh);

/// Disjoint union of closed meshes.
TriangleMesh merge_meshes(std::span<const TriangleMesh> meshes);

/// Splits every triangle into four through its edge midpoints, `levels` times.
TriangleMesh subdivide(const TriangleMesh& mesh, int levels = 1);

/// Axis-aligned box with its base on z = 0, centred in x/y.
TriangleMesh make_box(double sx, double sy, double sz);
/// Closed prism approximating a cylinder with its base on z = 0.
TriangleMesh make_cylinder(double radius, double height, int segments = 16);

/// Area-weighted surface samples; deterministic for a given engine state.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::mt19937_64& rng);

// ASCII OBJ (v/f records; polygon faces are fanned) and binary STL.
TriangleMesh load_obj(const std::string& path);
TriangleMesh parse_obj(const std::string& text);
TriangleMesh load_stl(const std::string& path);
TriangleMesh parse_stl_binary(const std::string& bytes);
/// Loads by extension (.obj / .stl). STL vertices are welded exactly.
TriangleMesh load_mesh(const std::string& path);
std::string to_obj(const TriangleMesh& mesh);

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Moller-Trumbore ray/triangle test. Reports t along `dir` and whether the
/// hit is close enough to an edge or vertex that the parity count is unsafe.
struct RayHit {
  bool hit = false;
  double t = 0.0;
  bool near_boundary = false;
};
RayHit intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                              const Vec3& c);

/// Fixed set of generic ray directions used for parity sign tests.
std::span<const Vec3> parity_directions();

/// Exact point-to-mesh queries accelerated by an axis-aligned bounding volume
/// hierarchy. Immutable after construction, so concurrent queries are safe.
class MeshDistance {
 public:
  explicit MeshDistance(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }

  double unsigned_distance(const Vec3& p, Vec3* closest = nullptr) const;
  /// True when the parity of crossings along a generic ray is odd.
  bool inside(const Vec3& p) const;
  /// Negative inside.
  double signed_distance(const Vec3& p) const;
  /// True when the open segment a->b crosses the surface.
  bool segment_intersects(const Vec3& a, const Vec3& b) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };

  int build(int first, int count);
  void nearest(int node, const Vec3& p, double& best_sq, Vec3& best_point) const;
  int count_crossings(const Vec3& origin, const Vec3& dir, bool& unsafe) const;

  TriangleMesh mesh_;
  std::vector<int> order_;
  std::vector<Eigen::AlignedBox3d> tri_boxes_;
  std::vector<Node> nodes_;
};

/// Free-function form used by the API surface; builds a hierarchy per call.
double signed_distance(const Vec3& point, const TriangleMesh& mesh);

}  // namespace mif
