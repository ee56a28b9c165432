#pragma once

// Confidence-gated primitive store: reliability estimation for gaussian
// primitives, confidence-weighted feature compositing and centroids, and the
// linear codec that stores semantic features in a 32-dim latent space.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mif/common.hpp"

namespace mif {

struct GaussianPrimitive {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  double opacity = 1.0;        // alpha in [0, 1]
  VecX feature;                // unit L2 norm
  double instability = 0.0;    // accumulated instability g >= 0
  double confidence = 1.0;     // C in [0, 1], filled by estimate_confidence
  std::optional<std::int64_t> object_id;
};

struct ConfidenceParams {
  double beta = 5.0;      // instability penalty sharpness
  double gamma = 2.0;     // opacity scaling
  double tau_conf = 0.6;  // minimum confidence admitted as evidence

  void validate() const;
};

/// Global normalizers for g and alpha.
struct InstabilityStats {
  double mean_instability = 0.0;
  double mean_opacity = 0.0;
};

InstabilityStats compute_stats(std::span<const GaussianPrimitive> primitives);

/// Smooth gate on normalized instability g_n and normalized opacity a_n,
/// clamped to [0, 1].
double confidence_value(double g_n, double alpha_n, const ConfidenceParams& params);

/// Fills `confidence` using normalizers taken from the set itself.
/// Throws EmptyInput on an empty set and DegenerateOpacity when mean alpha is 0.
/// A set whose mean instability is 0 gets C = 1 everywhere.
std::vector<GaussianPrimitive> estimate_confidence(std::vector<GaussianPrimitive> primitives,
                                                   const ConfidenceParams& params);

/// Same gate against externally supplied normalizers (e.g. the whole map).
void apply_confidence(std::span<GaussianPrimitive> primitives, const InstabilityStats& stats,
                      const ConfidenceParams& params);

struct RaySample {
  double confidence = 1.0;
  double opacity = 1.0;
  VecX feature;
};

struct Composite {
  VecX feature;
  double weight = 0.0;  // sum of C*alpha*T, in [0, 1]
};

/// Front-to-back compositing where both the contribution and the attenuation of
/// each sample are scaled by its confidence. Empty input yields a zero vector of
/// size `dim`.
Composite composite_features(std::span<const RaySample> samples, Eigen::Index dim);

/// Transmittance in front of each sample.
std::vector<double> transmittance(std::span<const RaySample> samples);

/// Sum(C*alpha*x) / Sum(C*alpha). Throws DegenerateWeight on zero total weight.
Vec3 weighted_centroid(std::span<const Vec3> points, std::span<const double> confidence,
                       std::span<const double> opacity);

/// Mean confidence of a node's supporting primitives.
double node_reliability(std::span<const double> confidence);

/// Aggregated evidence for one detected object, computed from its primitives.
struct SupportSummary {
  Vec3 centroid = Vec3::Zero();
  double reliability = 0.0;
  VecX feature;  // unit norm
  std::size_t support = 0;
  std::size_t admitted = 0;  // primitives with C >= tau_conf
};

/// Gates primitives by tau_conf, then builds centroid / reliability / feature.
/// Features are composited front-to-back as seen from `view_origin`. Returns
/// nullopt when no primitive clears the gate.
std::optional<SupportSummary> summarize_support(std::span<const GaussianPrimitive> primitives,
                                                const ConfidenceParams& params,
                                                const Vec3& view_origin);

class FeatureCodec {
 public:
  static constexpr int kDefaultLatentDim = 32;

  FeatureCodec() = default;
  FeatureCodec(MatX encode, MatX decode, VecX mean);

  /// Centered truncated SVD of `training` (rows are samples).
  /// Throws InsufficientData when rows < k or cols < k.
  static FeatureCodec fit(const MatX& training, int k = kDefaultLatentDim);

  VecX encode(const VecX& feature) const;
  VecX decode(const VecX& latent) const;

  const MatX& encode_matrix() const { return encode_; }
  const MatX& decode_matrix() const { return decode_; }
  const VecX& mean() const { return mean_; }
  Eigen::Index latent_dim() const { return encode_.rows(); }
  Eigen::Index raw_dim() const { return encode_.cols(); }

  /// Singular values of the centered training data, descending.
  const VecX& singular_values() const { return singular_values_; }

 private:
  MatX encode_;
  MatX decode_;
  VecX mean_;
  VecX singular_values_;
};

/// One JSON object per line, fields in the fixed order
/// id, position, alpha, g, confidence, latent, object_id.
void write_primitives(std::ostream& out, std::span<const GaussianPrimitive> primitives);
std::string primitive_record(const GaussianPrimitive& p);
std::vector<GaussianPrimitive> read_primitives(std::istream& in);

/// Map-side primitive support keyed by graph node id. Confidence normalizers
/// are the global means over everything stored.
class AppearanceStore {
 public:
  void set_support(std::int64_t node_id, std::vector<GaussianPrimitive> primitives);
  void erase(std::int64_t node_id);
  const std::vector<GaussianPrimitive>* support(std::int64_t node_id) const;

  InstabilityStats stats() const;
  /// Re-evaluates C for every stored primitive with the current global means.
  void refresh_confidence(const ConfidenceParams& params);
  std::size_t size() const;
  const std::map<std::int64_t, std::vector<GaussianPrimitive>>& nodes() const { return support_; }

 private:
  std::map<std::int64_t, std::vector<GaussianPrimitive>> support_;
};

}  // namespace mif
