#include "mif/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace mif {

namespace {

using json = nlohmann::ordered_json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double planar(const Vec3& a, const Vec3& b) { return (a.head<2>() - b.head<2>()).norm(); }

// Detections built from one (possibly merged) observation. Index l of
// `detections` / `support` is local node l of `graph`.
struct Evidence {
  std::vector<Detection> detections;
  std::vector<std::vector<GaussianPrimitive>> support;
  SceneGraph graph;
};

Evidence build_evidence(std::vector<ObservedObject> objects, const InstabilityStats& stats,
                        const ConfidenceParams& conf, const Vec3& view_origin) {
  Evidence ev;
  for (auto& o : objects) {
    apply_confidence(o.primitives, stats, conf);
    const auto summary = summarize_support(o.primitives, conf, view_origin);
    if (!summary) continue;
    Detection d;
    d.category = o.category;
    d.room = o.room;
    d.centroid = summary->centroid;
    d.extent = o.extent;
    d.feature = summary->feature;
    for (const auto& p : o.primitives) d.support_confidence.push_back(p.confidence);
    d.object_id = o.object_id;
    ev.detections.push_back(std::move(d));
    ev.support.push_back(std::move(o.primitives));
  }
  ev.graph = build_local_graph(ev.detections);
  return ev;
}

Vec3 raw_centroid(const ObservedObject& o) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : o.primitives) c += p.position;
  return o.primitives.empty() ? c : Vec3(c / static_cast<double>(o.primitives.size()));
}

// Fuses detections of the same object from several scan views.
std::vector<ObservedObject> merge_views(const std::vector<ObservedObject>& all, double radius) {
  std::vector<ObservedObject> merged;
  std::vector<Vec3> centers;
  for (const auto& o : all) {
    const Vec3 c = raw_centroid(o);
    std::size_t k = 0;
    for (; k < merged.size(); ++k) {
      if (lower(merged[k].category) == lower(o.category) && (centers[k] - c).norm() <= radius) break;
    }
    if (k == merged.size()) {
      merged.push_back(o);
      centers.push_back(c);
    } else {
      auto& m = merged[k];
      const double n0 = static_cast<double>(m.primitives.size());
      const double n1 = static_cast<double>(o.primitives.size());
      centers[k] = (n0 * centers[k] + n1 * c) / (n0 + n1);
      m.primitives.insert(m.primitives.end(), o.primitives.begin(), o.primitives.end());
      if (!m.object_id) m.object_id = o.object_id;
    }
  }
  for (auto& m : merged) {
    for (std::size_t k = 0; k < m.primitives.size(); ++k) m.primitives[k].id = static_cast<std::int64_t>(k);
  }
  return merged;
}

Vec2 room_centroid(const std::vector<Room>& rooms, const std::string& name, const Vec2& fallback) {
  for (const auto& r : rooms) {
    if (lower(r.name) != lower(name) || r.polygon.empty()) continue;
    Vec2 c = Vec2::Zero();
    for (const auto& p : r.polygon) c += p;
    return c / static_cast<double>(r.polygon.size());
  }
  return fallback;
}

struct Goal {
  std::optional<NodeId> node;  // memory node believed to be the target
  Vec3 estimate = Vec3::Zero();
  bool searching = false;  // heading for a landmark / room because memory has no target
};

struct InteractionInput {
  std::vector<std::pair<std::int64_t, std::vector<Vec3>>> objects;  // target first
  Vec3 target_centroid = Vec3::Zero();
  std::vector<double> reliability;  // Omega over the neighbourhood
};

enum class Arrival { kInteract, kContinue, kRemoved, kFailed };

class TaskRunner {
 public:
  TaskRunner(const Scenario& scenario, MemoryMode mode, RunTrace* trace)
      : s_(scenario), p_(scenario.params), mode_(mode), world_(scenario), trace_(trace) {
    report_.scenario = scenario.name;
    report_.mode = mode;
    inflation_ = body_circumscribed_radius(scenario.robot.stance) + p_.ips.delta_safe;
  }

  TaskReport run() {
    pose_ = s_.robot.start;
    build_memory();
    if (trace_) trace_->initial_memory = memory_;
    world_.apply_events_at(0, s_.events);
    refresh_grid();

    auto g = ground(true);
    if (!g) return finish(TaskOutcome::kFailed, "target absent from memory");
    goal_ = *g;

    while (true) {
      if (report_.ticks >= p_.sim.max_ticks) return finish(TaskOutcome::kFailed, "tick budget exhausted");
      if (!plan()) return finish(TaskOutcome::kFailed, "no path to the target area");
      const int nav = navigate();
      if (nav == kTimeout) return finish(TaskOutcome::kFailed, "tick budget exhausted");
      if (nav == kRemovedDuringNav) return finish(TaskOutcome::kRemovedReport, "");
      if (nav == kReplan) continue;

      InteractionInput input;
      const Arrival a = arrive(input);
      if (a == Arrival::kContinue) continue;
      if (a == Arrival::kRemoved) return finish(TaskOutcome::kRemovedReport, "");
      if (a == Arrival::kFailed) return finish(TaskOutcome::kFailed, failure_reason_);
      return interact(input);
    }
  }

 private:
  static constexpr int kArrived = 0;
  static constexpr int kReplan = 1;
  static constexpr int kTimeout = 2;
  static constexpr int kRemovedDuringNav = 3;

  // Offline reconstruction stand-in: every non-structural object observed once
  // at mapping speed, normalizers fixed from the whole map.
  void build_memory() {
    std::vector<ObservedObject> seen;
    std::vector<Vec3> origins;
    for (const auto& [id, obj] : world_.objects()) {
      if (obj.spec.structural) continue;
      const Vec2 c = obj.centroid.head<2>();
      Vec2 dir = room_centroid(world_.rooms(), obj.spec.room, c + Vec2(1, 0)) - c;
      dir = dir.norm() > 1e-9 ? Vec2(dir.normalized()) : Vec2(1, 0);
      const Vec2 at = c + 1.5 * dir;
      const Pose2 view{at.x(), at.y(), std::atan2(-dir.y(), -dir.x())};
      seen.push_back(observe_object(world_, id, view, p_.sim.mapping_speed, 0.0, p_.jitter,
                                    mix_seed(s_.seed, fnv1a("map")), 2 * p_.camera.primitives_per_object));
      origins.push_back(camera_position(view, p_.camera));
    }
    std::vector<GaussianPrimitive> all;
    for (const auto& o : seen) all.insert(all.end(), o.primitives.begin(), o.primitives.end());
    if (all.empty()) throw EmptyInput("scenario has no objects to map");
    stats_ = compute_stats(all);

    std::vector<Detection> dets;
    std::vector<std::vector<GaussianPrimitive>> support;
    for (std::size_t k = 0; k < seen.size(); ++k) {
      auto one = build_evidence({seen[k]}, stats_, p_.confidence, origins[k]);
      if (one.detections.empty()) continue;
      dets.push_back(one.detections[0]);
      support.push_back(std::move(one.support[0]));
    }
    memory_ = build_local_graph(dets);
    for (std::size_t k = 0; k < dets.size(); ++k) {
      store_.set_support(static_cast<NodeId>(k), support[k]);
      if (dets[k].object_id) node_object_[static_cast<NodeId>(k)] = *dets[k].object_id;
    }
  }

  void refresh_grid() {
    grid_ = world_.floor_grid(p_.sim.grid_resolution);
    inflated_ = grid_.inflated(inflation_);
  }

  std::optional<Goal> ground(bool allow_search) {
    const VecX proto = category_prototype(s_.query.object);
    try {
      const GraphNode& n = query_target(memory_, s_.query, &proto);
      return Goal{n.id, n.centroid, false};
    } catch (const TargetNotFound&) {
      if (!allow_search || mode_ == MemoryMode::kStatic) return std::nullopt;
    }
    Goal g;
    g.searching = true;
    const std::string lm = lower(s_.query.landmark);
    for (const auto& [id, n] : memory_.nodes()) {
      if (!lm.empty() && lower(n.caption) == lm && lower(n.room) == lower(s_.query.region)) {
        g.estimate = n.centroid;
        return g;
      }
    }
    const Vec2 rc = room_centroid(world_.rooms(), s_.query.region, pose_.position());
    g.estimate = Vec3(rc.x(), rc.y(), 0.8);
    return g;
  }

  bool plan() {
    const Vec2 target = goal_.estimate.head<2>();
    const double radius = 1.5;
    const double res = grid_.resolution();
    const auto [ci, cj] = inflated_.cell_of(target);
    const int span = static_cast<int>(std::ceil(radius / res));
    std::vector<std::pair<double, Vec2>> cells;
    for (int j = cj - span; j <= cj + span; ++j) {
      for (int i = ci - span; i <= ci + span; ++i) {
        if (!inflated_.in_bounds(i, j) || inflated_.occupied(i, j)) continue;
        const Vec2 c = inflated_.center(i, j);
        const double d = (c - target).norm();
        if (d <= radius) cells.emplace_back(d, c);
      }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    // Tracking may cut into the inflation band; leave it by the nearest free cell.
    Vec2 start = pose_.position();
    if (inflated_.blocked(start)) {
      try {
        start = nearest_free(inflated_, start);
      } catch (const NoPath&) {
        return false;
      }
    }
    const std::size_t tries = std::min<std::size_t>(cells.size(), 10);
    for (std::size_t k = 0; k < tries; ++k) {
      try {
        path_ = plan_path(grid_, start, cells[k].second, inflation_);
        if (start != pose_.position()) path_.waypoints.insert(path_.waypoints.begin(), pose_.position());
        return true;
      } catch (const NoPath&) {
      }
    }
    return false;
  }

  std::set<NodeId> predicted_in_view(const Pose2& pose) const {
    std::set<NodeId> out;
    const Vec3 cam = camera_position(pose, p_.camera);
    for (const auto& [id, n] : memory_.nodes()) {
      if (!in_fov(pose, n.centroid, p_.camera, p_.camera.view_margin_range, p_.camera.view_margin_angle)) continue;
      if (world_.occluded(cam, n.centroid)) continue;
      out.insert(id);
    }
    return out;
  }

  int navigate() {
    int persist = 0;
    while (true) {
      if (report_.ticks >= p_.sim.max_ticks) return kTimeout;
      if ((pose_.position() - path_.waypoints.back()).norm() <= p_.tracking.delta_arrival) return kArrived;

      const TrackingStep st = pure_pursuit_step(pose_, path_.waypoints, p_.tracking);
      const Pose2 next = step_unicycle(pose_, st.v, st.omega, p_.sim.dt);
      report_.path_length += (next.position() - pose_.position()).norm();
      pose_ = next;
      ++report_.ticks;
      const int tick = report_.ticks;
      const std::size_t before = world_.history().size();
      world_.apply_events_at(tick, s_.events);
      if (world_.history().size() != before) refresh_grid();

      Observation obs = observe(world_, pose_, st.v, st.kappa, p_.jitter, p_.camera,
                                mix_seed(s_.seed, static_cast<std::uint64_t>(tick)),
                                p_.camera.primitives_per_object);
      const Evidence ev =
          build_evidence(std::move(obs.objects), stats_, p_.confidence, camera_position(pose_, p_.camera));
      const auto in_view = predicted_in_view(pose_);
      const Matching m = match_nodes(ev.graph, memory_, p_.discrepancy, &in_view);
      const double d = total_discrepancy(ev.graph, memory_, m, p_.discrepancy);
      report_.d_trace.emplace_back(tick, d);

      if (mode_ != MemoryMode::kFull) continue;
      persist = d > p_.discrepancy.tau ? persist + 1 : 0;
      if (persist < p_.discrepancy.persistence_ticks || attempts_ >= p_.sim.max_updates) continue;
      persist = 0;

      const AffectedRegion region = affected_region(ev.graph, memory_, m, p_.discrepancy);
      Vec3 center = Vec3::Zero();
      int count = 0;
      for (NodeId l : region.local_nodes) {
        center += ev.graph.node(l).centroid;
        ++count;
      }
      for (NodeId g : region.global_nodes) {
        center += memory_.node(g).centroid;
        ++count;
      }
      if (count == 0) continue;
      center /= count;
      if (!memory_update(center)) continue;

      const bool had_target = !goal_.searching;
      auto g = ground(false);
      if (g) {
        if (!goal_.node || *g->node != *goal_.node || planar(g->estimate, goal_.estimate) > 0.3) {
          goal_ = *g;
          return kReplan;
        }
        goal_ = *g;
      } else if (had_target) {
        if (planar(center, goal_.estimate) <= p_.discrepancy.gate_radius) return kRemovedDuringNav;
        // Lost from memory by a scan elsewhere: verify at the last known spot.
        goal_.node.reset();
        goal_.searching = true;
        return kReplan;
      }
    }
  }

  void turn_to(const Vec3& target) {
    const double heading = std::atan2(target.y() - pose_.y, target.x() - pose_.x);
    const double d = std::abs(normalize_angle(heading - pose_.theta));
    report_.ticks += static_cast<int>(std::ceil(d / (p_.tracking.turn_rate * p_.sim.dt)));
    pose_.theta = heading;
  }

  // Active scan around `center`, then a local patch of memory. Returns true
  // when the graph changed.
  bool memory_update(const Vec3& center) {
    ++attempts_;
    const int tick = report_.ticks;
    std::vector<Pose2> poses;
    for (int k = 0; k < p_.sim.scan_poses; ++k) {
      const double a = 2.0 * kPi * k / p_.sim.scan_poses;
      const Vec2 at = center.head<2>() + p_.sim.scan_radius * Vec2(std::cos(a), std::sin(a));
      if (inflated_.blocked(at)) continue;
      const double inward = std::atan2(center.y() - at.y(), center.x() - at.x());
      poses.push_back({at.x(), at.y(), inward});
      poses.push_back({at.x(), at.y(), normalize_angle(inward + kPi)});
    }
    if (poses.empty()) {
      for (int k = 0; k < 8; ++k) poses.push_back({pose_.x, pose_.y, normalize_angle(pose_.theta + k * kPi / 4)});
    }
    std::vector<ObservedObject> all;
    std::set<NodeId> in_view;
    for (std::size_t k = 0; k < poses.size(); ++k) {
      Observation obs = observe(world_, poses[k], 0.0, 0.0, p_.jitter, p_.camera,
                                mix_seed(mix_seed(s_.seed, static_cast<std::uint64_t>(tick)), 7000 + k),
                                p_.camera.primitives_per_object);
      all.insert(all.end(), obs.objects.begin(), obs.objects.end());
      const auto v = predicted_in_view(poses[k]);
      in_view.insert(v.begin(), v.end());
    }
    report_.ticks += p_.sim.scan_poses;

    const Vec3 origin(center.x(), center.y(), p_.camera.height);
    Evidence ev = build_evidence(merge_views(all, p_.sim.merge_radius), stats_, p_.confidence, origin);
    const Matching m = match_nodes(ev.graph, memory_, p_.discrepancy, &in_view);
    const double d_before = total_discrepancy(ev.graph, memory_, m, p_.discrepancy);
    const AffectedRegion region = affected_region(ev.graph, memory_, m, p_.discrepancy);
    if (region.empty()) return false;

    const auto ids = patched_ids(memory_, region);
    if (trace_) {
      trace_->touched.insert(region.global_nodes.begin(), region.global_nodes.end());
      for (NodeId l : region.local_nodes) trace_->touched.insert(ids.at(l));
    }
    memory_ = patch_graph(memory_, region, ev.graph);
    for (NodeId g : region.global_nodes) {
      if (!memory_.has_node(g)) {
        store_.erase(g);
        node_object_.erase(g);
      }
    }
    for (NodeId l : region.local_nodes) {
      const NodeId g = ids.at(l);
      store_.set_support(g, ev.support[static_cast<std::size_t>(l)]);
      const auto& oid = ev.detections[static_cast<std::size_t>(l)].object_id;
      if (oid) {
        node_object_[g] = *oid;
      } else {
        node_object_.erase(g);
      }
    }
    ++report_.updates_triggered;

    std::set<NodeId> in_view_after;
    for (const auto& p : poses) {
      const auto v = predicted_in_view(p);
      in_view_after.insert(v.begin(), v.end());
    }
    const Matching m2 = match_nodes(ev.graph, memory_, p_.discrepancy, &in_view_after);
    report_.update_discrepancy.emplace_back(d_before, total_discrepancy(ev.graph, memory_, m2, p_.discrepancy));
    return true;
  }

  std::optional<std::size_t> caption_match(const Evidence& ev, const Vec3& near) const {
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t k = 0; k < ev.detections.size(); ++k) {
      const auto& d = ev.detections[k];
      if (lower(d.category) != lower(s_.query.object) || lower(d.room) != lower(s_.query.region)) continue;
      const double dist = planar(d.centroid, near);
      if (!best || dist < best_d) {
        best = k;
        best_d = dist;
      }
    }
    return best;
  }

  static std::vector<Vec3> admitted_points(const std::vector<GaussianPrimitive>& prims, double tau_conf) {
    std::vector<Vec3> pts;
    for (const auto& p : prims) {
      if (p.confidence >= tau_conf) pts.push_back(p.position);
    }
    return pts;
  }

  bool local_input(const Evidence& ev, std::size_t target, InteractionInput& out) const {
    const auto& td = ev.detections[target];
    if (!td.object_id) return false;
    out = {};
    out.target_centroid = td.centroid;
    out.objects.emplace_back(*td.object_id, admitted_points(ev.support[target], p_.confidence.tau_conf));
    out.reliability.push_back(ev.graph.node(static_cast<NodeId>(target)).reliability);
    for (std::size_t k = 0; k < ev.detections.size(); ++k) {
      const auto& d = ev.detections[k];
      if (k == target || !d.object_id || planar(d.centroid, td.centroid) > p_.sim.neighbor_radius) continue;
      out.objects.emplace_back(*d.object_id, admitted_points(ev.support[k], p_.confidence.tau_conf));
      out.reliability.push_back(ev.graph.node(static_cast<NodeId>(k)).reliability);
    }
    return true;
  }

  bool stored_input(NodeId target, InteractionInput& out) const {
    auto it = node_object_.find(target);
    if (it == node_object_.end() || !store_.support(target)) return false;
    out = {};
    const GraphNode& tn = memory_.node(target);
    out.target_centroid = tn.centroid;
    out.objects.emplace_back(it->second, admitted_points(*store_.support(target), p_.confidence.tau_conf));
    out.reliability.push_back(tn.reliability);
    for (const auto& [id, n] : memory_.nodes()) {
      if (id == target || planar(n.centroid, tn.centroid) > p_.sim.neighbor_radius) continue;
      auto oi = node_object_.find(id);
      if (oi == node_object_.end() || !store_.support(id)) continue;
      out.objects.emplace_back(oi->second, admitted_points(*store_.support(id), p_.confidence.tau_conf));
      out.reliability.push_back(n.reliability);
    }
    return true;
  }

  Arrival arrive(InteractionInput& input) {
    turn_to(goal_.estimate);
    ++report_.ticks;
    Observation obs = observe(world_, pose_, 0.0, 0.0, p_.jitter, p_.camera,
                              mix_seed(mix_seed(s_.seed, static_cast<std::uint64_t>(report_.ticks)), fnv1a("dwell")),
                              p_.camera.dense_primitives);
    const Evidence ev =
        build_evidence(std::move(obs.objects), stats_, p_.confidence, camera_position(pose_, p_.camera));
    {
      const auto in_view = predicted_in_view(pose_);
      const Matching m = match_nodes(ev.graph, memory_, p_.discrepancy, &in_view);
      report_.d_trace.emplace_back(report_.ticks, total_discrepancy(ev.graph, memory_, m, p_.discrepancy));
    }

    if (mode_ == MemoryMode::kStatic) {
      if (!goal_.node || !stored_input(*goal_.node, input)) {
        failure_reason_ = "stored target has no usable support";
        return Arrival::kFailed;
      }
      return Arrival::kInteract;
    }

    auto cand = caption_match(ev, goal_.estimate);
    auto confirmed = [&](const Vec3& est) {
      return cand && planar(ev.detections[*cand].centroid, est) <= p_.discrepancy.gate_radius;
    };
    if (!goal_.searching && confirmed(goal_.estimate)) {
      if (local_input(ev, *cand, input)) return Arrival::kInteract;
    }

    if (mode_ == MemoryMode::kFull && attempts_ < p_.sim.max_updates) {
      memory_update(goal_.estimate);
      auto g = ground(false);
      if (g) {
        if (confirmed(g->estimate) && local_input(ev, *cand, input)) return Arrival::kInteract;
        if (planar(g->estimate, goal_.estimate) > p_.discrepancy.gate_radius || goal_.searching) {
          goal_ = *g;
          return Arrival::kContinue;
        }
        goal_ = *g;
        if (stored_input(*g->node, input)) return Arrival::kInteract;
      } else if (!goal_.searching) {
        return Arrival::kRemoved;
      }
    }

    if (cand && retargets_ < 2) {
      ++retargets_;
      goal_.node.reset();
      goal_.searching = false;
      goal_.estimate = ev.detections[*cand].centroid;
      if (confirmed(goal_.estimate) && planar(goal_.estimate, Vec3(pose_.x, pose_.y, 0)) <= 1.2) {
        if (local_input(ev, *cand, input)) return Arrival::kInteract;
      }
      return Arrival::kContinue;
    }
    return Arrival::kRemoved;
  }

  std::optional<TriangleMesh> register_object(std::int64_t object_id, const std::vector<Vec3>& points,
                                              std::uint64_t view_seed) const {
    if (points.size() < 4 || !world_.assets().contains(object_id)) return std::nullopt;
    const TriangleMesh base = provide_mesh(world_.assets(), object_id, {p_.sim.mesh_sigma, false}, view_seed);
    // Generator stand-in: canonical frame, arbitrary scale, roughly upright.
    std::mt19937_64 rng(mix_seed(view_seed, static_cast<std::uint64_t>(object_id) + 101));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double s_gen = 0.7 + 0.7 * u01(rng);
    const double yaw = (world_.present(object_id) ? world_.object(object_id).spec.pose.yaw : 0.0) +
                       0.2 * (u01(rng) - 0.5);
    const Mat3 r = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    const TriangleMesh gen = base.transformed(r, -s_gen * (r * base.centroid()), s_gen);

    // Observed points are registered onto dense model samples (the sparse
    // side as source keeps the scale unbiased), then the model is carried over.
    const auto model = sample_surface(gen, 2000, rng);
    SimilarityTransform t;
    try {
      t = centroid_rms_alignment(model, points);
      t = scaled_robust_icp(points, model, t.inverse()).transform.inverse();
    } catch (const DegenerateGeometry&) {
    }
    return t.apply(gen);
  }

  TaskReport interact(const InteractionInput& input) {
    // The best-ranked viewpoint seeds the reconstruction draw.
    std::uint64_t view_seed = s_.seed;
    try {
      const auto views = sample_viewpoints(input.target_centroid, p_.sim.viewpoint_radius, p_.sim.viewpoint_samples);
      const auto ranked = rank_viewpoints(views, input.target_centroid, input.reliability);
      for (std::size_t k = 0; k < views.size(); ++k) {
        if (views[k].position == ranked.front().first.position) {
          view_seed = mix_seed(s_.seed, k);
          break;
        }
      }
    } catch (const Error&) {
    }

    std::vector<TriangleMesh> parts;
    std::optional<TriangleMesh> target_mesh;
    for (std::size_t k = 0; k < input.objects.size(); ++k) {
      auto m = register_object(input.objects[k].first, input.objects[k].second, view_seed);
      if (!m) continue;
      if (k == 0) target_mesh = *m;
      parts.push_back(std::move(*m));
    }
    if (!target_mesh) return finish(TaskOutcome::kFailed, "target could not be registered");
    for (const auto& w : world_.structural_meshes()) parts.push_back(w);
    const MeshDistance scene(merge_meshes(parts));
    const Vec3 t_obj = top_center(*target_mesh);

    MicroAdjustOptions opts;
    opts.delta_safe = p_.ips.delta_safe + p_.ips.registration_margin;
    opts.admissible = [this](const StancePose& sp) { return !inflated_.blocked(Vec2(sp.x, sp.y)); };
    StancePose templ = s_.robot.stance;
    const Vec2 to_target = t_obj.head<2>() - pose_.position();
    const double dist = to_target.norm();
    const Vec2 dir = dist > 1e-9 ? Vec2(to_target / dist) : Vec2(std::cos(pose_.theta), std::sin(pose_.theta));
    std::optional<StancePose> stance;
    for (int k = 0; k < p_.sim.retry_budget && !stance; ++k) {
      const Vec2 c = pose_.position() + std::min(0.15 * k, std::max(0.0, dist - 0.3)) * dir;
      templ.x = c.x();
      templ.y = c.y();
      try {
        stance = micro_adjust_stance(face_target(templ, t_obj), scene, t_obj, s_.robot.reach, opts);
      } catch (const NoFeasibleStance&) {
      }
    }
    if (!stance) return finish(TaskOutcome::kFailed, "no IPS-valid stance within the retry budget");

    report_.path_length += (Vec2(stance->x, stance->y) - pose_.position()).norm();
    pose_ = {stance->x, stance->y, stance->heading};
    report_.final_stance = pose_;
    report_.ips_diag = ips(*stance, scene, t_obj, s_.robot.reach, p_.ips.delta_safe);
    const auto body = posed_body(*stance);
    report_.ground_truth_clearance = min_clearance(body, MeshDistance(world_.scene_mesh(1)));
    stance_ = *stance;
    return finish(TaskOutcome::kArrived, "");
  }

  TaskReport finish(TaskOutcome outcome, const std::string& why) {
    const Adjudication adj =
        adjudicate(world_, s_.query, outcome, stance_ ? &*stance_ : nullptr, s_.robot.reach, p_);
    report_.success = adj.success;
    report_.reason = why.empty() ? adj.reason : why;
    if (trace_) trace_->final_memory = memory_;
    if (outcome == TaskOutcome::kRemovedReport) {
      report_.outcome = "removed-report";
    } else {
      report_.outcome = adj.success ? "success" : "failure";
    }
    canonicalize(report_);
    return report_;
  }

  const Scenario& s_;
  const ScenarioParams& p_;
  MemoryMode mode_;
  World world_;
  RunTrace* trace_ = nullptr;
  double inflation_ = 0.0;
  TaskReport report_;

  SceneGraph memory_;
  AppearanceStore store_;
  std::map<NodeId, std::int64_t> node_object_;
  InstabilityStats stats_;

  OccupancyGrid grid_;
  OccupancyGrid inflated_;
  Pose2 pose_;
  PlannedPath path_;
  Goal goal_;
  int attempts_ = 0;
  int retargets_ = 0;
  std::string failure_reason_;
  std::optional<StancePose> stance_;
};

json report_json(const TaskReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["mode"] = to_string(r.mode);
  j["outcome"] = r.outcome;
  j["success"] = r.success;
  j["reason"] = r.reason;
  j["ticks"] = r.ticks;
  j["updates_triggered"] = r.updates_triggered;
  j["path_length_m"] = r.path_length;
  if (r.final_stance) {
    j["final_stance"] = {{"x", r.final_stance->x}, {"y", r.final_stance->y}, {"heading", r.final_stance->theta}};
  } else {
    j["final_stance"] = nullptr;
  }
  if (r.ips_diag) {
    const auto& d = *r.ips_diag;
    j["ips"] = {{"i_col", d.i_col},
                {"i_ik", d.i_ik},
                {"i_stab", d.i_stab},
                {"clearance_m", d.clearance_m},
                {"reach_m", d.reach_m},
                {"stability_margin_m", d.stability_margin_m}};
  } else {
    j["ips"] = nullptr;
  }
  j["ground_truth_clearance_m"] =
      r.ground_truth_clearance ? json(*r.ground_truth_clearance) : json(nullptr);
  j["update_discrepancy"] = json::array();
  for (const auto& [b, a] : r.update_discrepancy) j["update_discrepancy"].push_back({b, a});
  j["d_trace"] = json::array();
  for (const auto& [t, d] : r.d_trace) j["d_trace"].push_back({t, d});
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::string to_string(MemoryMode mode) {
  switch (mode) {
    case MemoryMode::kStatic:
      return "static";
    case MemoryMode::kInitial:
      return "initial";
    case MemoryMode::kFull:
      return "full";
  }
  return "full";
}

MemoryMode memory_mode_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "static") return MemoryMode::kStatic;
  if (l == "initial") return MemoryMode::kInitial;
  if (l == "full") return MemoryMode::kFull;
  throw ParseError("unknown memory mode '" + s + "' (static, initial, full)");
}

bool TaskReport::operator==(const TaskReport& o) const {
  auto same_pose = [](const std::optional<Pose2>& a, const std::optional<Pose2>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->x == b->x && a->y == b->y && a->theta == b->theta);
  };
  auto same_ips = [](const std::optional<IpsDiagnostics>& a, const std::optional<IpsDiagnostics>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->i_col == b->i_col && a->i_ik == b->i_ik && a->i_stab == b->i_stab &&
                  a->clearance_m == b->clearance_m && a->reach_m == b->reach_m &&
                  a->stability_margin_m == b->stability_margin_m);
  };
  return scenario == o.scenario && mode == o.mode && outcome == o.outcome && success == o.success &&
         reason == o.reason && ticks == o.ticks && d_trace == o.d_trace &&
         updates_triggered == o.updates_triggered && same_pose(final_stance, o.final_stance) &&
         same_ips(ips_diag, o.ips_diag) && path_length == o.path_length &&
         update_discrepancy == o.update_discrepancy && ground_truth_clearance == o.ground_truth_clearance;
}

void canonicalize(TaskReport& r) {
  r.path_length = round_sig9(r.path_length);
  for (auto& [t, d] : r.d_trace) d = round_sig9(d);
  for (auto& [b, a] : r.update_discrepancy) {
    b = round_sig9(b);
    a = round_sig9(a);
  }
  if (r.final_stance) {
    r.final_stance->x = round_sig9(r.final_stance->x);
    r.final_stance->y = round_sig9(r.final_stance->y);
    r.final_stance->theta = round_sig9(r.final_stance->theta);
  }
  if (r.ips_diag) {
    r.ips_diag->clearance_m = round_sig9(r.ips_diag->clearance_m);
    r.ips_diag->reach_m = round_sig9(r.ips_diag->reach_m);
    r.ips_diag->stability_margin_m = round_sig9(r.ips_diag->stability_margin_m);
  }
  if (r.ground_truth_clearance) r.ground_truth_clearance = round_sig9(*r.ground_truth_clearance);
}

TaskReport run_task(const Scenario& scenario, MemoryMode mode, RunTrace* trace) {
  scenario.params.confidence.validate();
  scenario.params.discrepancy.validate();
  scenario.params.tracking.validate();
  scenario.params.jitter.validate();
  scenario.robot.reach.validate();
  return TaskRunner(scenario, mode, trace).run();
}

bool triggers(const std::vector<std::pair<int, double>>& trace, double tau, int persistence) {
  int run = 0;
  for (const auto& [t, d] : trace) {
    run = d > tau ? run + 1 : 0;
    if (run >= persistence) return true;
  }
  return false;
}

std::vector<SuiteEntry> load_suite(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot read " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("scenarios") || !j["scenarios"].is_array()) {
    throw ParseError(manifest.string() + ": expected {\"scenarios\": [...]}");
  }
  std::vector<SuiteEntry> suite;
  for (const auto& e : j["scenarios"]) {
    if (!e.is_object() || !e.contains("file") || !e["file"].is_string()) {
      throw ParseError(manifest.string() + ": scenarios[].file must be a string");
    }
    SuiteEntry entry;
    entry.scenario = load_scenario((fs::path(dir) / e["file"].get<std::string>()).string());
    entry.change = e.value("change", std::string("none"));
    suite.push_back(std::move(entry));
  }
  if (suite.empty()) throw EmptySuite("suite " + dir + " has no scenarios");
  return suite;
}

void write_suite(const std::string& dir, const std::vector<SuiteEntry>& suite) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["scenarios"] = json::array();
  for (std::size_t k = 0; k < suite.size(); ++k) {
    std::string name = suite[k].scenario.name.empty() ? "scenario_" + std::to_string(k) : suite[k].scenario.name;
    const std::string file = name + ".json";
    write_text((fs::path(dir) / file).string(), scenario_to_json(suite[k].scenario));
    manifest["scenarios"].push_back({{"file", file}, {"change", suite[k].change}});
  }
  write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::vector<SweepRow> sweep_tau(const std::vector<SuiteEntry>& suite, const std::vector<double>& taus,
                                std::vector<TaskReport>* monitoring_runs) {
  if (suite.empty()) throw EmptySuite("sweep needs at least one scenario");
  std::vector<TaskReport> runs;
  runs.reserve(suite.size());
  for (const auto& e : suite) runs.push_back(run_task(e.scenario, MemoryMode::kInitial));

  std::vector<SweepRow> rows;
  for (double tau : taus) {
    SweepRow row;
    row.tau = tau;
    for (std::size_t k = 0; k < suite.size(); ++k) {
      const bool changed = suite[k].change != "none";
      const bool fired = triggers(runs[k].d_trace, tau, suite[k].scenario.params.discrepancy.persistence_ticks);
      if (changed && fired) ++row.tp;
      if (changed && !fired) ++row.fn;
      if (!changed && fired) ++row.fp;
      if (!changed && !fired) ++row.tn;
    }
    row.tpr = row.tp + row.fn > 0 ? static_cast<double>(row.tp) / (row.tp + row.fn) : 0.0;
    row.fpr = row.fp + row.tn > 0 ? static_cast<double>(row.fp) / (row.fp + row.tn) : 0.0;
    const int denom = 2 * row.tp + row.fp + row.fn;
    row.f1 = denom > 0 ? 2.0 * row.tp / denom : 0.0;
    rows.push_back(row);
  }
  if (monitoring_runs) *monitoring_runs = std::move(runs);
  return rows;
}

std::pair<double, double> wilson_interval(int successes, int n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  const double lo = successes == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = successes == n ? 1.0 : std::min(1.0, center + half);
  return {lo, hi};
}

AdaptationResult eval_adaptation(const std::vector<SuiteEntry>& suite, const std::vector<MemoryMode>& modes) {
  if (suite.empty()) throw EmptySuite("adaptation needs at least one scenario");
  AdaptationResult result;
  std::vector<std::string> order;
  std::map<std::pair<std::string, MemoryMode>, AdaptationCell> cells;
  for (const auto& e : suite) {
    if (std::find(order.begin(), order.end(), e.change) == order.end()) order.push_back(e.change);
    for (MemoryMode m : modes) {
      TaskReport r = run_task(e.scenario, m);
      auto& cell = cells[{e.change, m}];
      cell.change = e.change;
      cell.mode = m;
      ++cell.n;
      if (r.success) ++cell.successes;
      result.reports.push_back(std::move(r));
      result.changes.push_back(e.change);
    }
  }
  for (const auto& c : order) {
    for (MemoryMode m : modes) {
      AdaptationCell cell = cells[{c, m}];
      cell.rate = cell.n > 0 ? static_cast<double>(cell.successes) / cell.n : 0.0;
      std::tie(cell.ci_low, cell.ci_high) = wilson_interval(cell.successes, cell.n);
      result.table.push_back(cell);
    }
  }
  return result;
}

std::string report_to_json(const TaskReport& report) {
  TaskReport r = report;
  canonicalize(r);
  return report_json(r).dump();
}

TaskReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  try {
    TaskReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.mode = memory_mode_from_string(j.at("mode").get<std::string>());
    r.outcome = j.at("outcome").get<std::string>();
    r.success = j.at("success").get<bool>();
    r.reason = j.at("reason").get<std::string>();
    r.ticks = j.at("ticks").get<int>();
    r.updates_triggered = j.at("updates_triggered").get<int>();
    r.path_length = j.at("path_length_m").get<double>();
    if (!j.at("final_stance").is_null()) {
      const auto& s = j["final_stance"];
      r.final_stance = Pose2{s.at("x").get<double>(), s.at("y").get<double>(), s.at("heading").get<double>()};
    }
    if (!j.at("ips").is_null()) {
      const auto& d = j["ips"];
      IpsDiagnostics diag;
      diag.i_col = d.at("i_col").get<bool>();
      diag.i_ik = d.at("i_ik").get<bool>();
      diag.i_stab = d.at("i_stab").get<bool>();
      diag.clearance_m = d.at("clearance_m").get<double>();
      diag.reach_m = d.at("reach_m").get<double>();
      diag.stability_margin_m = d.at("stability_margin_m").get<double>();
      r.ips_diag = diag;
    }
    if (!j.at("ground_truth_clearance_m").is_null()) {
      r.ground_truth_clearance = j["ground_truth_clearance_m"].get<double>();
    }
    for (const auto& p : j.at("update_discrepancy")) r.update_discrepancy.emplace_back(p.at(0), p.at(1));
    for (const auto& p : j.at("d_trace")) r.d_trace.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

void write_reports_jsonl(const std::string& path, const std::vector<TaskReport>& reports) {
  std::string text;
  for (const auto& r : reports) text += report_to_json(r) + "\n";
  write_text(path, text);
}

void write_reports_csv(const std::string& path, const std::vector<TaskReport>& reports,
                       const std::vector<std::string>* changes) {
  std::ostringstream out;
  out << "scenario,change,mode,outcome,success,ticks,updates_triggered,path_length_m,clearance_m,"
         "ground_truth_clearance_m,reason\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    std::string reason = r.reason;
    for (auto& c : reason) {
      if (c == '"') c = '\'';
    }
    out << r.scenario << ',' << (changes ? (*changes)[k] : std::string()) << ',' << to_string(r.mode) << ','
        << r.outcome << ',' << (r.success ? 1 : 0) << ',' << r.ticks << ',' << r.updates_triggered << ','
        << format_sig9(r.path_length) << ',' << (r.ips_diag ? format_sig9(r.ips_diag->clearance_m) : "") << ','
        << (r.ground_truth_clearance ? format_sig9(*r.ground_truth_clearance) : "") << ",\"" << reason << "\"\n";
  }
  write_text(path, out.str());
}

std::string adaptation_summary_json(const AdaptationResult& result) {
  json j;
  j["cells"] = json::array();
  for (const auto& c : result.table) {
    j["cells"].push_back({{"change", c.change},
                          {"mode", to_string(c.mode)},
                          {"n", c.n},
                          {"successes", c.successes},
                          {"rate", round_sig9(c.rate)},
                          {"ci_low", round_sig9(c.ci_low)},
                          {"ci_high", round_sig9(c.ci_high)}});
  }
  return j.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "tau,tp,fp,fn,tn,tpr,fpr,f1\n";
  for (const auto& r : rows) {
    out << format_sig9(r.tau) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ','
        << format_sig9(r.tpr) << ',' << format_sig9(r.fpr) << ',' << format_sig9(r.f1) << '\n';
  }
  return out.str();
}

void apply_seed_override(Scenario& scenario) {
  const char* env = std::getenv("MIF_SEED");
  if (!env || !*env) return;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used, 10);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    scenario.seed = v;
  } catch (const std::exception&) {
    throw ParseError(std::string("MIF_SEED must be an unsigned integer, got '") + env + "'");
  }
}

}  // namespace mif
