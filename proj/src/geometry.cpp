#include "mif/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <random>

#include "mif/kdtree.hpp"

namespace mif {

std::vector<Viewpoint> sample_viewpoints(const Vec3& centroid, double radius, int n) {
  if (!(radius > 0.0)) throw std::invalid_argument("viewpoint radius must be positive");
  if (n < 1) throw std::invalid_argument("need at least one viewpoint");
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Viewpoint> views;
  views.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - static_cast<double>(i) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
    Viewpoint v;
    v.position = centroid + radius * dir;
    v.axis = -dir.normalized();
    views.push_back(v);
  }
  return views;
}

double viewpoint_utility(const Viewpoint& view, const Vec3& centroid,
                         std::span<const double> neighborhood_reliability,
                         const ViewUtilityParams& params) {
  const Vec3 to_centroid = centroid - view.position;
  const double dist = to_centroid.norm();
  if (dist == 0.0) throw DegenerateView("view position coincides with the centroid");
  if (neighborhood_reliability.empty()) throw EmptyInput("no neighbourhood reliability values");
  double mean_omega = 0.0;
  for (double o : neighborhood_reliability) mean_omega += o;
  mean_omega /= static_cast<double>(neighborhood_reliability.size());

  const double distance_term = std::exp(-dist * dist / (2.0 * params.sigma_d * params.sigma_d));
  const double align = std::max(0.0, view.axis.dot(to_centroid / dist));
  return distance_term * std::pow(align, params.gamma_view) * mean_omega;
}

std::vector<std::pair<Viewpoint, double>> rank_viewpoints(std::span<const Viewpoint> views,
                                                          const Vec3& centroid,
                                                          std::span<const double> reliability,
                                                          const ViewUtilityParams& params) {
  std::vector<std::pair<Viewpoint, double>> out;
  out.reserve(views.size());
  for (const auto& v : views) out.emplace_back(v, viewpoint_utility(v, centroid, reliability, params));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.rotation = rotation.transpose();
  inv.scale = 1.0 / scale;
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

SimilarityTransform SimilarityTransform::operator*(const SimilarityTransform& o) const {
  SimilarityTransform c;
  c.rotation = rotation * o.rotation;
  c.scale = scale * o.scale;
  c.translation = scale * (rotation * o.translation) + translation;
  return c;
}

double rotation_angle(const Mat3& rotation) {
  const double c = std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  return std::acos(c);
}

SimilarityTransform fit_similarity(std::span<const Vec3> source, std::span<const Vec3> target,
                                   std::span<const double> weights) {
  if (source.size() != target.size() || source.size() != weights.size()) {
    throw DimensionMismatch("fit_similarity: list lengths differ");
  }
  double wsum = 0.0;
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    wsum += weights[i];
    mu_s += weights[i] * source[i];
    mu_t += weights[i] * target[i];
  }
  if (!(wsum > 0.0)) throw DegenerateGeometry("similarity fit has zero total weight");
  mu_s /= wsum;
  mu_t /= wsum;

  double var_s = 0.0;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 ds = source[i] - mu_s;
    const Vec3 dt = target[i] - mu_t;
    var_s += weights[i] * ds.squaredNorm();
    cov += weights[i] * dt * ds.transpose();
  }
  var_s /= wsum;
  cov /= wsum;
  if (!(var_s > 1e-18)) throw DegenerateGeometry("similarity fit: source has no spread");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  SimilarityTransform out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_s;
  if (!(out.scale > 0.0)) throw DegenerateGeometry("similarity fit produced non-positive scale");
  out.translation = mu_t - out.scale * (out.rotation * mu_s);
  return out;
}

SimilarityTransform centroid_rms_alignment(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.empty() || target.empty()) throw EmptyInput("alignment needs points");
  auto stats = [](std::span<const Vec3> pts, Vec3& mean, double& rms) {
    mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    rms = 0.0;
    for (const auto& p : pts) rms += (p - mean).squaredNorm();
    rms = std::sqrt(rms / static_cast<double>(pts.size()));
  };
  Vec3 ms, mt;
  double rs, rt;
  stats(source, ms, rs);
  stats(target, mt, rt);
  if (!(rs > 0.0)) throw DegenerateGeometry("source has zero spread");
  SimilarityTransform out;
  out.scale = rt > 0.0 ? rt / rs : 1.0;
  out.translation = mt - out.scale * ms;
  return out;
}

double robust_loss(double r, const IcpOptions& options) {
  if (options.loss == RobustLoss::kSquared || r <= options.huber_delta) return 0.5 * r * r;
  return options.huber_delta * (r - 0.5 * options.huber_delta);
}

namespace {

double robust_weight(double r, const IcpOptions& options) {
  if (options.loss == RobustLoss::kSquared || r <= options.huber_delta) return 1.0;
  return options.huber_delta / r;
}

void require_volumetric(std::span<const Vec3> pts, const char* what) {
  if (pts.size() < 4) throw DegenerateGeometry(std::string(what) + " needs at least 4 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[0] <= 1e-10 * ev[2]) {
    throw DegenerateGeometry(std::string(what) + " points are coplanar or collinear");
  }
}

}  // namespace

IcpResult scaled_robust_icp(std::span<const Vec3> source, std::span<const Vec3> target,
                            const SimilarityTransform& init, const IcpOptions& options) {
  require_volumetric(source, "ICP source");
  if (target.size() < 4) throw DegenerateGeometry("ICP target needs at least 4 points");
  if (!(options.huber_delta > 0.0)) throw std::invalid_argument("huber_delta must be positive");

  const KdTree tree(target);
  const std::size_t n = source.size();
  std::vector<Vec3> matched(n);
  std::vector<double> weights(n);

  // Evaluates the robust objective at `t`, refreshing correspondences/weights.
  auto evaluate = [&](const SimilarityTransform& t) {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 y = t.apply(source[i]);
      double d2 = 0.0;
      matched[i] = tree.point(tree.nearest(y, &d2));
      const double r = std::sqrt(d2);
      cost += robust_loss(r, options);
      weights[i] = robust_weight(r, options);
    }
    return cost / static_cast<double>(n);
  };

  IcpResult result;
  result.transform = init;
  result.residual = evaluate(init);
  result.residual_history.push_back(result.residual);

  for (int it = 0; it < options.max_iters; ++it) {
    SimilarityTransform next;
    try {
      next = fit_similarity(source, matched, weights);
    } catch (const DegenerateGeometry&) {
      break;
    }
    // Keep the weights/matches that belong to the accepted iterate if the step
    // fails to improve.
    const std::vector<Vec3> prev_matched = matched;
    const std::vector<double> prev_weights = weights;
    const double cost = evaluate(next);
    result.iterations = it + 1;
    if (cost > result.residual) {
      matched = prev_matched;
      weights = prev_weights;
      result.converged = true;
      break;
    }
    const double change = result.residual - cost;
    result.transform = next;
    result.residual = cost;
    result.residual_history.push_back(cost);
    if (cost == 0.0 || change <= options.relative_tolerance * std::max(cost, 1e-300)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

void AssetTable::add(std::int64_t object_id, TriangleMesh mesh) { meshes_[object_id] = std::move(mesh); }

const TriangleMesh& AssetTable::get(std::int64_t object_id) const {
  auto it = meshes_.find(object_id);
  if (it == meshes_.end()) throw AssetNotFound("no mesh asset for object " + std::to_string(object_id));
  return it->second;
}

TriangleMesh provide_mesh(const AssetTable& assets, std::int64_t object_id, const MeshNoise& noise,
                          std::uint64_t seed) {
  const TriangleMesh& truth = assets.get(object_id);
  if (noise.vertex_sigma < 0.0) throw std::invalid_argument("vertex_sigma must be non-negative");
  TriangleMesh base = noise.dropout_remesh ? subdivide(truth, 1) : truth;
  if (noise.vertex_sigma == 0.0) return base;

  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(object_id)));
  std::normal_distribution<double> gauss(0.0, noise.vertex_sigma);
  const double limit = 4.0 * noise.vertex_sigma;
  std::vector<Vec3> verts = base.vertices();
  for (auto& v : verts) {
    Vec3 d;
    do {
      d = Vec3(gauss(rng), gauss(rng), gauss(rng));
    } while (d.norm() > limit);
    v += d;
  }
  return TriangleMesh(std::move(verts), base.triangles());
}

}  // namespace mif
