#pragma once

// Interaction geometry: candidate-view sampling and ranking, oracle mesh
// provision, and scale-aware robust ICP.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mif/common.hpp"
#include "mif/mesh.hpp"

namespace mif {

struct Viewpoint {
  Vec3 position = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();  // optical axis, unit
};

/// Fibonacci lattice on the upper hemisphere of `radius` around `centroid`.
/// The first point is the zenith; every axis points at the centroid.
std::vector<Viewpoint> sample_viewpoints(const Vec3& centroid, double radius, int n);

struct ViewUtilityParams {
  double sigma_d = 1.0;     // metres
  double gamma_view = 2.0;  // alignment exponent
};

/// exp(-|c-p|^2 / 2 sigma^2) * max(0, d.v)^gamma * mean(omega).
/// Throws DegenerateView when the view sits on the centroid.
double viewpoint_utility(const Viewpoint& view, const Vec3& centroid,
                         std::span<const double> neighborhood_reliability,
                         const ViewUtilityParams& params = {});

/// Views sorted by decreasing utility (stable on ties).
std::vector<std::pair<Viewpoint, double>> rank_viewpoints(std::span<const Viewpoint> views,
                                                          const Vec3& centroid,
                                                          std::span<const double> reliability,
                                                          const ViewUtilityParams& params = {});

struct SimilarityTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static SimilarityTransform identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform inverse() const;
  /// (this * other)(p) = this(other(p)).
  SimilarityTransform operator*(const SimilarityTransform& other) const;
  TriangleMesh apply(const TriangleMesh& mesh) const { return mesh.transformed(rotation, translation, scale); }
};

/// Rotation angle of R, radians.
double rotation_angle(const Mat3& rotation);

/// Closed-form weighted similarity alignment minimising
/// sum w_i |s R src_i + t - dst_i|^2 (Umeyama). Throws DegenerateGeometry.
SimilarityTransform fit_similarity(std::span<const Vec3> source, std::span<const Vec3> target,
                                   std::span<const double> weights);

/// Translation and isotropic scale that match centroids and RMS radii.
SimilarityTransform centroid_rms_alignment(std::span<const Vec3> source, std::span<const Vec3> target);

enum class RobustLoss { kHuber, kSquared };

struct IcpOptions {
  double huber_delta = 0.05;  // metres
  int max_iters = 100;
  double relative_tolerance = 1e-8;
  RobustLoss loss = RobustLoss::kHuber;
};

struct IcpResult {
  SimilarityTransform transform;
  double residual = 0.0;  // mean robust loss at the returned iterate
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // one entry per evaluated iterate
};

double robust_loss(double r, const IcpOptions& options);

/// Alternates nearest-neighbour correspondence (source -> target) with a
/// reweighted closed-form similarity solve. Requires >= 4 non-coplanar source
/// points (DegenerateGeometry otherwise).
IcpResult scaled_robust_icp(std::span<const Vec3> source, std::span<const Vec3> target,
                            const SimilarityTransform& init, const IcpOptions& options = {});

/// Mesh assets keyed by object id, in the object's own frame.
class AssetTable {
 public:
  void add(std::int64_t object_id, TriangleMesh mesh);
  const TriangleMesh& get(std::int64_t object_id) const;  // AssetNotFound
  bool contains(std::int64_t object_id) const { return meshes_.count(object_id) > 0; }

 private:
  std::map<std::int64_t, TriangleMesh> meshes_;
};

struct MeshNoise {
  double vertex_sigma = 0.0;    // metres; per-vertex displacement truncated at 4 sigma
  bool dropout_remesh = false;  // re-tessellate once before perturbing
};

/// Ground-truth mesh with deterministic seeded perturbation. The result stays
/// watertight.
TriangleMesh provide_mesh(const AssetTable& assets, std::int64_t object_id, const MeshNoise& noise,
                          std::uint64_t seed);

}  // namespace mif
