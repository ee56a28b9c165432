#include "mif/appearance.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace mif {

void ConfidenceParams::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("confidence: beta must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("confidence: gamma must be > 0");
  if (!(tau_conf >= 0.0 && tau_conf <= 1.0)) {
    throw std::invalid_argument("confidence: tau_conf must lie in [0, 1]");
  }
}

InstabilityStats compute_stats(std::span<const GaussianPrimitive> primitives) {
  if (primitives.empty()) throw EmptyInput("no primitives");
  InstabilityStats s;
  for (const auto& p : primitives) {
    if (!(p.instability >= 0.0)) throw std::invalid_argument("primitive instability must be >= 0");
    if (!(p.opacity >= 0.0 && p.opacity <= 1.0)) {
      throw std::invalid_argument("primitive opacity must lie in [0, 1]");
    }
    s.mean_instability += p.instability;
    s.mean_opacity += p.opacity;
  }
  const auto n = static_cast<double>(primitives.size());
  s.mean_instability /= n;
  s.mean_opacity /= n;
  return s;
}

double confidence_value(double g_n, double alpha_n, const ConfidenceParams& params) {
  const double keep = std::exp(-params.beta * g_n);
  const double gate = 1.0 / (1.0 + std::exp(-params.gamma * alpha_n * (1.0 - g_n)));
  return std::clamp(keep + (1.0 - keep) * gate, 0.0, 1.0);
}

void apply_confidence(std::span<GaussianPrimitive> primitives, const InstabilityStats& stats,
                      const ConfidenceParams& params) {
  if (stats.mean_instability <= 0.0) {
    for (auto& p : primitives) p.confidence = 1.0;
    return;
  }
  if (stats.mean_opacity <= 0.0) throw DegenerateOpacity("mean opacity is zero");
  for (auto& p : primitives) {
    p.confidence = confidence_value(p.instability / stats.mean_instability,
                                    p.opacity / stats.mean_opacity, params);
  }
}

std::vector<GaussianPrimitive> estimate_confidence(std::vector<GaussianPrimitive> primitives,
                                                   const ConfidenceParams& params) {
  params.validate();
  const InstabilityStats stats = compute_stats(primitives);
  apply_confidence(primitives, stats, params);
  return primitives;
}

Composite composite_features(std::span<const RaySample> samples, Eigen::Index dim) {
  Composite out{VecX::Zero(dim), 0.0};
  double t = 1.0;
  for (const auto& s : samples) {
    if (s.feature.size() != dim) throw DimensionMismatch("ray sample feature dimension");
    const double w = s.confidence * s.opacity * t;
    out.feature += w * s.feature;
    out.weight += w;
    t *= 1.0 - s.confidence * s.opacity;
  }
  return out;
}

std::vector<double> transmittance(std::span<const RaySample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  double t = 1.0;
  for (const auto& s : samples) {
    out.push_back(t);
    t *= 1.0 - s.confidence * s.opacity;
  }
  return out;
}

Vec3 weighted_centroid(std::span<const Vec3> points, std::span<const double> confidence,
                       std::span<const double> opacity) {
  if (points.size() != confidence.size() || points.size() != opacity.size()) {
    throw DimensionMismatch("weighted_centroid: list lengths differ");
  }
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = confidence[i] * opacity[i];
    acc += w * points[i];
    total += w;
  }
  if (!(total > 0.0)) throw DegenerateWeight("total confidence-opacity weight is zero");
  return acc / total;
}

double node_reliability(std::span<const double> confidence) {
  if (confidence.empty()) throw EmptyInput("node has no supporting primitives");
  return std::accumulate(confidence.begin(), confidence.end(), 0.0) /
         static_cast<double>(confidence.size());
}

std::optional<SupportSummary> summarize_support(std::span<const GaussianPrimitive> primitives,
                                                const ConfidenceParams& params,
                                                const Vec3& view_origin) {
  if (primitives.empty()) return std::nullopt;

  std::vector<double> all_conf;
  all_conf.reserve(primitives.size());
  std::vector<const GaussianPrimitive*> admitted;
  for (const auto& p : primitives) {
    all_conf.push_back(p.confidence);
    if (p.confidence >= params.tau_conf) admitted.push_back(&p);
  }
  if (admitted.empty()) return std::nullopt;

  std::vector<Vec3> pts;
  std::vector<double> c;
  std::vector<double> a;
  for (const auto* p : admitted) {
    pts.push_back(p->position);
    c.push_back(p->confidence);
    a.push_back(p->opacity);
  }

  SupportSummary out;
  out.centroid = weighted_centroid(pts, c, a);
  out.reliability = node_reliability(all_conf);
  out.support = primitives.size();
  out.admitted = admitted.size();

  std::stable_sort(admitted.begin(), admitted.end(), [&](const auto* l, const auto* r) {
    return (l->position - view_origin).squaredNorm() < (r->position - view_origin).squaredNorm();
  });
  std::vector<RaySample> ray;
  ray.reserve(admitted.size());
  for (const auto* p : admitted) ray.push_back({p->confidence, p->opacity, p->feature});
  const Eigen::Index dim = admitted.front()->feature.size();
  VecX f = composite_features(ray, dim).feature;
  const double n = f.norm();
  out.feature = n > 0.0 ? VecX(f / n) : admitted.front()->feature;
  return out;
}

FeatureCodec::FeatureCodec(MatX encode, MatX decode, VecX mean)
    : encode_(std::move(encode)), decode_(std::move(decode)), mean_(std::move(mean)) {
  if (encode_.cols() != mean_.size() || decode_.rows() != mean_.size() ||
      encode_.rows() != decode_.cols()) {
    throw DimensionMismatch("codec matrices do not agree");
  }
}

FeatureCodec FeatureCodec::fit(const MatX& training, int k) {
  if (k <= 0) throw std::invalid_argument("codec latent dimension must be positive");
  if (training.rows() < k) {
    throw InsufficientData("codec needs at least " + std::to_string(k) + " training rows, got " +
                           std::to_string(training.rows()));
  }
  if (training.cols() < k) {
    throw InsufficientData("raw feature dimension is smaller than the latent dimension");
  }
  const VecX mean = training.colwise().mean().transpose();
  const MatX centered = training.rowwise() - mean.transpose();
  Eigen::BDCSVD<MatX> svd(centered, Eigen::ComputeThinV);
  const MatX basis = svd.matrixV().leftCols(k);

  FeatureCodec codec(basis.transpose(), basis, mean);
  codec.singular_values_ = svd.singularValues();
  return codec;
}

VecX FeatureCodec::encode(const VecX& feature) const {
  if (feature.size() != raw_dim()) {
    throw DimensionMismatch("encode: expected " + std::to_string(raw_dim()) + " dims, got " +
                            std::to_string(feature.size()));
  }
  return encode_ * (feature - mean_);
}

VecX FeatureCodec::decode(const VecX& latent) const {
  if (latent.size() != latent_dim()) {
    throw DimensionMismatch("decode: expected " + std::to_string(latent_dim()) + " dims, got " +
                            std::to_string(latent.size()));
  }
  return decode_ * latent + mean_;
}

namespace {

void append_number(std::string& s, double x) { s += format_sig9(x); }

}  // namespace

std::string primitive_record(const GaussianPrimitive& p) {
  std::string s;
  s.reserve(64 + 14 * static_cast<std::size_t>(p.feature.size()));
  s += "{\"id\":";
  s += std::to_string(p.id);
  s += ",\"position\":[";
  for (int i = 0; i < 3; ++i) {
    if (i) s += ',';
    append_number(s, p.position[i]);
  }
  s += "],\"alpha\":";
  append_number(s, p.opacity);
  s += ",\"g\":";
  append_number(s, p.instability);
  s += ",\"confidence\":";
  append_number(s, p.confidence);
  s += ",\"latent\":[";
  for (Eigen::Index i = 0; i < p.feature.size(); ++i) {
    if (i) s += ',';
    append_number(s, p.feature[i]);
  }
  s += "],\"object_id\":";
  s += p.object_id ? std::to_string(*p.object_id) : std::string("null");
  s += '}';
  return s;
}

void write_primitives(std::ostream& out, std::span<const GaussianPrimitive> primitives) {
  for (const auto& p : primitives) out << primitive_record(p) << '\n';
}

std::vector<GaussianPrimitive> read_primitives(std::istream& in) {
  std::vector<GaussianPrimitive> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      GaussianPrimitive p;
      p.id = j.at("id").get<std::int64_t>();
      const auto& pos = j.at("position");
      p.position = Vec3(pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>());
      p.opacity = j.at("alpha").get<double>();
      p.instability = j.at("g").get<double>();
      p.confidence = j.at("confidence").get<double>();
      const auto& lat = j.at("latent");
      p.feature.resize(static_cast<Eigen::Index>(lat.size()));
      for (std::size_t i = 0; i < lat.size(); ++i) {
        p.feature[static_cast<Eigen::Index>(i)] = lat[i].get<double>();
      }
      if (!j.at("object_id").is_null()) p.object_id = j.at("object_id").get<std::int64_t>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("primitive record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void AppearanceStore::set_support(std::int64_t node_id, std::vector<GaussianPrimitive> primitives) {
  support_[node_id] = std::move(primitives);
}

void AppearanceStore::erase(std::int64_t node_id) { support_.erase(node_id); }

const std::vector<GaussianPrimitive>* AppearanceStore::support(std::int64_t node_id) const {
  auto it = support_.find(node_id);
  return it == support_.end() ? nullptr : &it->second;
}

InstabilityStats AppearanceStore::stats() const {
  InstabilityStats s;
  std::size_t n = 0;
  for (const auto& [id, prims] : support_) {
    for (const auto& p : prims) {
      s.mean_instability += p.instability;
      s.mean_opacity += p.opacity;
      ++n;
    }
  }
  if (n == 0) throw EmptyInput("appearance store is empty");
  s.mean_instability /= static_cast<double>(n);
  s.mean_opacity /= static_cast<double>(n);
  return s;
}

void AppearanceStore::refresh_confidence(const ConfidenceParams& params) {
  const InstabilityStats s = stats();
  for (auto& [id, prims] : support_) apply_confidence(prims, s, params);
}

std::size_t AppearanceStore::size() const {
  std::size_t n = 0;
  for (const auto& [id, prims] : support_) n += prims.size();
  return n;
}

}  // namespace mif
