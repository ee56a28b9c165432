#include "mif/simworld.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace mif {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ParseError(path + ": " + msg);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) fail(path + "." + it.key(), "unknown field");
  }
}

const json& field(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing required field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != N) fail(path, "expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

void opt_number(const json& obj, const char* key, const std::string& path, double& out) {
  if (auto it = obj.find(key); it != obj.end()) out = number(*it, path + "." + key);
}

void opt_int(const json& obj, const char* key, const std::string& path, int& out) {
  if (auto it = obj.find(key); it != obj.end()) out = static_cast<int>(integer(*it, path + "." + key));
}

ObjectPose parse_pose(const json& j, const std::string& path) {
  check_keys(j, {"position", "yaw"}, path);
  ObjectPose p;
  p.position = vec<3>(field(j, "position", path), path + ".position");
  if (auto it = j.find("yaw"); it != j.end()) p.yaw = number(*it, path + ".yaw");
  return p;
}

ObjectSpec parse_object(const json& j, const std::string& path) {
  check_keys(j, {"id", "category", "room", "pose", "mesh", "height", "structural"}, path);
  ObjectSpec o;
  o.id = integer(field(j, "id", path), path + ".id");
  o.category = text(field(j, "category", path), path + ".category");
  if (o.category.empty()) fail(path + ".category", "must not be empty");
  if (auto it = j.find("room"); it != j.end()) o.room = text(*it, path + ".room");
  o.pose = parse_pose(field(j, "pose", path), path + ".pose");
  o.mesh = text(field(j, "mesh", path), path + ".mesh");
  if (auto it = j.find("height"); it != j.end()) {
    o.height = number(*it, path + ".height");
    if (!(*o.height > 0.0)) fail(path + ".height", "must be positive");
  }
  if (auto it = j.find("structural"); it != j.end()) {
    if (!it->is_boolean()) fail(path + ".structural", "expected a boolean");
    o.structural = it->get<bool>();
  }
  if (!o.structural && o.room.empty()) fail(path + ".room", "missing required field");
  return o;
}

ojson pose_json(const ObjectPose& p) {
  ojson j;
  j["position"] = {p.position.x(), p.position.y(), p.position.z()};
  j["yaw"] = p.yaw;
  return j;
}

ojson object_json(const ObjectSpec& o) {
  ojson j;
  j["id"] = o.id;
  j["category"] = o.category;
  if (!o.room.empty()) j["room"] = o.room;
  j["pose"] = pose_json(o.pose);
  j["mesh"] = o.mesh;
  if (o.height) j["height"] = *o.height;
  if (o.structural) j["structural"] = true;
  return j;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

Mat3 yaw_rotation(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace

bool Room::contains(const Vec2& p) const {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kRelocate: return "relocate";
    case EventKind::kRemove: return "remove";
    case EventKind::kAdd: return "add";
  }
  return "remove";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "relocate") return EventKind::kRelocate;
  if (s == "remove") return EventKind::kRemove;
  if (s == "add") return EventKind::kAdd;
  throw ParseError("unknown event kind '" + s + "'");
}

void JitterModel::validate() const {
  for (double c : {amp0, k_speed, k_curv, noise_rel, pos_noise_base, pos_noise_gain, feature_noise,
                   feature_noise_gain, shift_gain}) {
    if (c < 0.0) throw std::invalid_argument("jitter coefficients must be non-negative");
  }
  if (spike_prob < 0.0 || spike_prob > 1.0 || spurious_prob < 0.0 || spurious_prob > 1.0) {
    throw std::invalid_argument("jitter probabilities must lie in [0, 1]");
  }
  if (!(spike_min >= 1.0 && spike_max >= spike_min)) throw std::invalid_argument("need 1 <= spike_min <= spike_max");
}

double JitterModel::base_instability(double v, double kappa) const {
  return amp0 + k_speed * std::abs(v) + k_curv * std::abs(kappa);
}

TriangleMesh resolve_mesh(const std::string& ref, const std::string& base_dir) {
  const std::string prefix = "primitive:";
  if (ref.rfind(prefix, 0) == 0) {
    std::istringstream in(ref.substr(prefix.size()));
    std::string kind;
    in >> kind;
    std::vector<double> args;
    for (double x; in >> x;) args.push_back(x);
    if (!in.eof()) throw ParseError("bad primitive mesh spec '" + ref + "'");
    for (double a : args) {
      if (!(a > 0.0)) throw ParseError("primitive mesh dimensions must be positive in '" + ref + "'");
    }
    if (kind == "box" && args.size() == 3) return make_box(args[0], args[1], args[2]);
    if (kind == "cylinder" && (args.size() == 2 || args.size() == 3)) {
      const int seg = args.size() == 3 ? static_cast<int>(args[2]) : 16;
      return make_cylinder(args[0], args[1], seg);
    }
    throw ParseError("bad primitive mesh spec '" + ref + "'");
  }
  const std::filesystem::path p = std::filesystem::path(base_dir) / ref;
  if (!std::filesystem::exists(p)) throw AssetNotFound("mesh asset not found: " + p.string());
  return load_mesh(p.string());
}

VecX category_prototype(const std::string& category) {
  std::mt19937_64 rng(fnv1a(lower(category)));
  std::normal_distribution<double> n(0.0, 1.0);
  VecX f(kLatentDim);
  for (int i = 0; i < kLatentDim; ++i) f[i] = n(rng);
  return f.normalized();
}

VecX instance_feature(const std::string& category, std::uint64_t seed, std::int64_t object_id) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(object_id) ^ 0xfeedULL));
  std::normal_distribution<double> n(0.0, 0.15 / std::sqrt(static_cast<double>(kLatentDim)));
  VecX f = category_prototype(category);
  for (int i = 0; i < kLatentDim; ++i) f[i] += n(rng);
  return f.normalized();
}

Scenario parse_scenario(const std::string& doc_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(doc_text);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_of(doc_text, e.byte)) + ": " + e.what());
  }
  const std::string root = "scenario";
  check_keys(doc, {"name", "seed", "rooms", "objects", "events", "robot", "query", "params"}, root);

  Scenario s;
  s.base_dir = base_dir;
  if (auto it = doc.find("name"); it != doc.end()) s.name = text(*it, "name");
  {
    const json& seed = field(doc, "seed", root);
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
      fail("seed", "expected a non-negative integer");
    }
    s.seed = seed.get<std::uint64_t>();
  }

  const json& rooms = field(doc, "rooms", root);
  if (!rooms.is_array() || rooms.empty()) fail("rooms", "expected a non-empty array");
  std::set<std::string> room_names;
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const std::string path = "rooms[" + std::to_string(i) + "]";
    check_keys(rooms[i], {"name", "polygon"}, path);
    Room r;
    r.name = text(field(rooms[i], "name", path), path + ".name");
    if (!room_names.insert(r.name).second) fail(path + ".name", "duplicate room '" + r.name + "'");
    const json& poly = field(rooms[i], "polygon", path);
    if (!poly.is_array() || poly.size() < 3) fail(path + ".polygon", "expected at least 3 vertices");
    for (std::size_t k = 0; k < poly.size(); ++k) {
      r.polygon.push_back(vec<2>(poly[k], path + ".polygon[" + std::to_string(k) + "]"));
    }
    s.rooms.push_back(std::move(r));
  }

  std::set<std::int64_t> ids;
  auto check_object = [&](const ObjectSpec& o, const std::string& path) {
    if (!ids.insert(o.id).second) fail(path + ".id", "duplicate object id " + std::to_string(o.id));
    if (!o.structural && !room_names.count(o.room)) fail(path + ".room", "unknown room '" + o.room + "'");
  };
  const json& objects = field(doc, "objects", root);
  if (!objects.is_array()) fail("objects", "expected an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string path = "objects[" + std::to_string(i) + "]";
    s.objects.push_back(parse_object(objects[i], path));
    check_object(s.objects.back(), path);
  }

  if (auto it = doc.find("events"); it != doc.end()) {
    if (!it->is_array()) fail("events", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "events[" + std::to_string(i) + "]";
      const json& ej = (*it)[i];
      check_keys(ej, {"tick", "kind", "object_id", "new_pose", "object"}, path);
      SceneEvent e;
      e.tick = static_cast<int>(integer(field(ej, "tick", path), path + ".tick"));
      if (e.tick < 0) fail(path + ".tick", "must be non-negative");
      try {
        e.kind = event_kind_from_string(text(field(ej, "kind", path), path + ".kind"));
      } catch (const ParseError& err) {
        fail(path + ".kind", err.what());
      }
      if (e.kind == EventKind::kAdd) {
        e.object = parse_object(field(ej, "object", path), path + ".object");
        check_object(*e.object, path + ".object");
        e.object_id = e.object->id;
        if (auto oid = ej.find("object_id"); oid != ej.end() && integer(*oid, path + ".object_id") != e.object_id) {
          fail(path + ".object_id", "does not match object.id");
        }
      } else {
        e.object_id = integer(field(ej, "object_id", path), path + ".object_id");
        if (ej.contains("object")) fail(path + ".object", "only allowed for add events");
      }
      if (e.kind == EventKind::kRelocate) {
        e.new_pose = parse_pose(field(ej, "new_pose", path), path + ".new_pose");
      } else if (ej.contains("new_pose")) {
        fail(path + ".new_pose", "only allowed for relocate events");
      }
      s.events.push_back(std::move(e));
    }
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const SceneEvent& a, const SceneEvent& b) { return a.tick < b.tick; });
  }

  {
    const json& rj = field(doc, "robot", root);
    check_keys(rj, {"start", "body", "feet", "com_offset", "reach"}, "robot");
    const Vec3 start = vec<3>(field(rj, "start", "robot"), "robot.start");
    s.robot.start = {start.x(), start.y(), normalize_angle(start.z())};
    if (auto it = rj.find("body"); it != rj.end()) {
      if (!it->is_array() || it->empty()) fail("robot.body", "expected a non-empty array");
      s.robot.stance.body.clear();
      for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string path = "robot.body[" + std::to_string(i) + "]";
        check_keys((*it)[i], {"center", "radius"}, path);
        Sphere sp;
        sp.center = vec<3>(field((*it)[i], "center", path), path + ".center");
        sp.radius = number(field((*it)[i], "radius", path), path + ".radius");
        if (!(sp.radius > 0.0)) fail(path + ".radius", "must be positive");
        s.robot.stance.body.push_back(sp);
      }
    }
    if (auto it = rj.find("feet"); it != rj.end()) {
      if (!it->is_array() || it->size() != 2) fail("robot.feet", "expected exactly two feet");
      for (std::size_t i = 0; i < 2; ++i) {
        const std::string path = "robot.feet[" + std::to_string(i) + "]";
        check_keys((*it)[i], {"length", "width", "offset"}, path);
        FootRect f;
        f.length = number(field((*it)[i], "length", path), path + ".length");
        f.width = number(field((*it)[i], "width", path), path + ".width");
        f.offset = vec<2>(field((*it)[i], "offset", path), path + ".offset");
        if (!(f.length > 0.0 && f.width > 0.0)) fail(path, "foot rectangle must have positive size");
        s.robot.stance.feet[i] = f;
      }
    }
    if (auto it = rj.find("com_offset"); it != rj.end()) s.robot.stance.com_offset = vec<3>(*it, "robot.com_offset");
    if (auto it = rj.find("reach"); it != rj.end()) {
      check_keys(*it, {"shoulder_offset", "r_min", "r_max"}, "robot.reach");
      if (auto sh = it->find("shoulder_offset"); sh != it->end()) {
        s.robot.reach.shoulder_offset = vec<3>(*sh, "robot.reach.shoulder_offset");
      }
      opt_number(*it, "r_min", "robot.reach", s.robot.reach.r_min);
      opt_number(*it, "r_max", "robot.reach", s.robot.reach.r_max);
      try {
        s.robot.reach.validate();
      } catch (const std::invalid_argument& e) {
        fail("robot.reach", e.what());
      }
    }
  }

  {
    const json& qj = field(doc, "query", root);
    check_keys(qj, {"region", "landmark", "object"}, "query");
    s.query.region = text(field(qj, "region", "query"), "query.region");
    s.query.object = text(field(qj, "object", "query"), "query.object");
    if (auto it = qj.find("landmark"); it != qj.end()) s.query.landmark = text(*it, "query.landmark");
    if (s.query.region.empty()) fail("query.region", "must not be empty");
    if (s.query.object.empty()) fail("query.object", "must not be empty");
  }

  if (auto pit = doc.find("params"); pit != doc.end()) {
    const json& pj = *pit;
    check_keys(pj, {"confidence", "discrepancy", "tracking", "ips", "jitter", "camera", "sim"}, "params");
    auto& P = s.params;
    if (auto it = pj.find("confidence"); it != pj.end()) {
      const std::string path = "params.confidence";
      check_keys(*it, {"beta", "gamma", "tau_conf"}, path);
      opt_number(*it, "beta", path, P.confidence.beta);
      opt_number(*it, "gamma", path, P.confidence.gamma);
      opt_number(*it, "tau_conf", path, P.confidence.tau_conf);
    }
    if (auto it = pj.find("discrepancy"); it != pj.end()) {
      const std::string path = "params.discrepancy";
      check_keys(*it, {"w_pos", "w_sem", "w_rel", "tau", "gate_radius", "delta_unmatched", "persistence_ticks"}, path);
      opt_number(*it, "w_pos", path, P.discrepancy.w_pos);
      opt_number(*it, "w_sem", path, P.discrepancy.w_sem);
      opt_number(*it, "w_rel", path, P.discrepancy.w_rel);
      opt_number(*it, "tau", path, P.discrepancy.tau);
      opt_number(*it, "gate_radius", path, P.discrepancy.gate_radius);
      opt_number(*it, "delta_unmatched", path, P.discrepancy.delta_unmatched);
      opt_int(*it, "persistence_ticks", path, P.discrepancy.persistence_ticks);
    }
    if (auto it = pj.find("tracking"); it != pj.end()) {
      const std::string path = "params.tracking";
      check_keys(*it, {"L0", "L_min", "L_max", "k_v", "v_max", "k_theta", "delta_arrival", "turn_rate", "v_stall"}, path);
      opt_number(*it, "L0", path, P.tracking.L0);
      opt_number(*it, "L_min", path, P.tracking.L_min);
      opt_number(*it, "L_max", path, P.tracking.L_max);
      opt_number(*it, "k_v", path, P.tracking.k_v);
      opt_number(*it, "v_max", path, P.tracking.v_max);
      opt_number(*it, "k_theta", path, P.tracking.k_theta);
      opt_number(*it, "delta_arrival", path, P.tracking.delta_arrival);
      opt_number(*it, "turn_rate", path, P.tracking.turn_rate);
      opt_number(*it, "v_stall", path, P.tracking.v_stall);
    }
    if (auto it = pj.find("ips"); it != pj.end()) {
      check_keys(*it, {"delta_safe", "registration_margin"}, "params.ips");
      opt_number(*it, "delta_safe", "params.ips", P.ips.delta_safe);
      opt_number(*it, "registration_margin", "params.ips", P.ips.registration_margin);
    }
    if (auto it = pj.find("jitter"); it != pj.end()) {
      const std::string path = "params.jitter";
      check_keys(*it, {"amp0", "k_speed", "k_curv", "noise_rel", "spike_prob", "spike_min", "spike_max",
                       "pos_noise_base", "pos_noise_gain", "feature_noise", "feature_noise_gain", "shift_gain",
                       "spurious_prob", "noise_seed"},
                 path);
      auto& J = P.jitter;
      opt_number(*it, "amp0", path, J.amp0);
      opt_number(*it, "k_speed", path, J.k_speed);
      opt_number(*it, "k_curv", path, J.k_curv);
      opt_number(*it, "noise_rel", path, J.noise_rel);
      opt_number(*it, "spike_prob", path, J.spike_prob);
      opt_number(*it, "spike_min", path, J.spike_min);
      opt_number(*it, "spike_max", path, J.spike_max);
      opt_number(*it, "pos_noise_base", path, J.pos_noise_base);
      opt_number(*it, "pos_noise_gain", path, J.pos_noise_gain);
      opt_number(*it, "feature_noise", path, J.feature_noise);
      opt_number(*it, "feature_noise_gain", path, J.feature_noise_gain);
      opt_number(*it, "shift_gain", path, J.shift_gain);
      opt_number(*it, "spurious_prob", path, J.spurious_prob);
      if (auto ns = it->find("noise_seed"); ns != it->end()) {
        J.noise_seed = static_cast<std::uint64_t>(integer(*ns, path + ".noise_seed"));
      }
    }
    if (auto it = pj.find("camera"); it != pj.end()) {
      const std::string path = "params.camera";
      check_keys(*it, {"height", "range", "half_fov", "primitives_per_object", "dense_primitives",
                       "view_margin_range", "view_margin_angle"},
                 path);
      auto& C = P.camera;
      opt_number(*it, "height", path, C.height);
      opt_number(*it, "range", path, C.range);
      opt_number(*it, "half_fov", path, C.half_fov);
      opt_int(*it, "primitives_per_object", path, C.primitives_per_object);
      opt_int(*it, "dense_primitives", path, C.dense_primitives);
      opt_number(*it, "view_margin_range", path, C.view_margin_range);
      opt_number(*it, "view_margin_angle", path, C.view_margin_angle);
    }
    if (auto it = pj.find("sim"); it != pj.end()) {
      const std::string path = "params.sim";
      check_keys(*it, {"dt", "max_ticks", "mapping_speed", "grid_resolution", "max_updates", "scan_radius",
                       "scan_poses", "merge_radius", "retry_budget", "mesh_sigma", "neighbor_radius",
                       "success_radius", "viewpoint_samples", "viewpoint_radius"},
                 path);
      auto& S = P.sim;
      opt_number(*it, "dt", path, S.dt);
      opt_int(*it, "max_ticks", path, S.max_ticks);
      opt_number(*it, "mapping_speed", path, S.mapping_speed);
      opt_number(*it, "grid_resolution", path, S.grid_resolution);
      opt_int(*it, "max_updates", path, S.max_updates);
      opt_number(*it, "scan_radius", path, S.scan_radius);
      opt_int(*it, "scan_poses", path, S.scan_poses);
      opt_number(*it, "merge_radius", path, S.merge_radius);
      opt_int(*it, "retry_budget", path, S.retry_budget);
      opt_number(*it, "mesh_sigma", path, S.mesh_sigma);
      opt_number(*it, "neighbor_radius", path, S.neighbor_radius);
      opt_number(*it, "success_radius", path, S.success_radius);
      opt_int(*it, "viewpoint_samples", path, S.viewpoint_samples);
      opt_number(*it, "viewpoint_radius", path, S.viewpoint_radius);
    }
  }

  try {
    s.params.confidence.validate();
    s.params.discrepancy.validate();
    s.params.tracking.validate();
    s.params.jitter.validate();
  } catch (const std::invalid_argument& e) {
    fail("params", e.what());
  }
  if (!(s.params.sim.dt > 0.0) || s.params.sim.max_ticks <= 0 || !(s.params.sim.grid_resolution > 0.0)) {
    fail("params.sim", "dt, max_ticks and grid_resolution must be positive");
  }
  if (!(s.params.camera.range > 0.0 && s.params.camera.half_fov > 0.0) ||
      s.params.camera.primitives_per_object < 1 || s.params.camera.dense_primitives < 1) {
    fail("params.camera", "range, half_fov and primitive counts must be positive");
  }
  if (!room_names.count(s.query.region)) fail("query.region", "unknown room '" + s.query.region + "'");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_scenario(ss.str(), dir.empty() ? "." : dir.string());
}

std::string scenario_to_json(const Scenario& s) {
  ojson doc;
  if (!s.name.empty()) doc["name"] = s.name;
  doc["seed"] = s.seed;
  doc["rooms"] = ojson::array();
  for (const auto& r : s.rooms) {
    ojson rj;
    rj["name"] = r.name;
    rj["polygon"] = ojson::array();
    for (const auto& p : r.polygon) rj["polygon"].push_back({p.x(), p.y()});
    doc["rooms"].push_back(rj);
  }
  doc["objects"] = ojson::array();
  for (const auto& o : s.objects) doc["objects"].push_back(object_json(o));
  doc["events"] = ojson::array();
  for (const auto& e : s.events) {
    ojson ej;
    ej["tick"] = e.tick;
    ej["kind"] = to_string(e.kind);
    ej["object_id"] = e.object_id;
    if (e.new_pose) ej["new_pose"] = pose_json(*e.new_pose);
    if (e.object) ej["object"] = object_json(*e.object);
    doc["events"].push_back(ej);
  }
  {
    ojson rj;
    rj["start"] = {s.robot.start.x, s.robot.start.y, s.robot.start.theta};
    rj["body"] = ojson::array();
    for (const auto& sp : s.robot.stance.body) {
      rj["body"].push_back({{"center", {sp.center.x(), sp.center.y(), sp.center.z()}}, {"radius", sp.radius}});
    }
    rj["feet"] = ojson::array();
    for (const auto& f : s.robot.stance.feet) {
      rj["feet"].push_back({{"length", f.length}, {"width", f.width}, {"offset", {f.offset.x(), f.offset.y()}}});
    }
    const Vec3& com = s.robot.stance.com_offset;
    rj["com_offset"] = {com.x(), com.y(), com.z()};
    const Vec3& sh = s.robot.reach.shoulder_offset;
    rj["reach"] = {{"shoulder_offset", {sh.x(), sh.y(), sh.z()}},
                   {"r_min", s.robot.reach.r_min},
                   {"r_max", s.robot.reach.r_max}};
    doc["robot"] = rj;
  }
  doc["query"] = {{"region", s.query.region}, {"landmark", s.query.landmark}, {"object", s.query.object}};
  const auto& P = s.params;
  ojson pj;
  pj["confidence"] = {{"beta", P.confidence.beta}, {"gamma", P.confidence.gamma}, {"tau_conf", P.confidence.tau_conf}};
  pj["discrepancy"] = {{"w_pos", P.discrepancy.w_pos},
                       {"w_sem", P.discrepancy.w_sem},
                       {"w_rel", P.discrepancy.w_rel},
                       {"tau", P.discrepancy.tau},
                       {"gate_radius", P.discrepancy.gate_radius},
                       {"delta_unmatched", P.discrepancy.delta_unmatched},
                       {"persistence_ticks", P.discrepancy.persistence_ticks}};
  pj["tracking"] = {{"L0", P.tracking.L0},       {"L_min", P.tracking.L_min},
                    {"L_max", P.tracking.L_max}, {"k_v", P.tracking.k_v},
                    {"v_max", P.tracking.v_max}, {"k_theta", P.tracking.k_theta},
                    {"delta_arrival", P.tracking.delta_arrival}, {"turn_rate", P.tracking.turn_rate}, {"v_stall", P.tracking.v_stall}};
  pj["ips"] = {{"delta_safe", P.ips.delta_safe}, {"registration_margin", P.ips.registration_margin}};
  const auto& J = P.jitter;
  pj["jitter"] = {{"amp0", J.amp0},
                  {"k_speed", J.k_speed},
                  {"k_curv", J.k_curv},
                  {"noise_rel", J.noise_rel},
                  {"spike_prob", J.spike_prob},
                  {"spike_min", J.spike_min},
                  {"spike_max", J.spike_max},
                  {"pos_noise_base", J.pos_noise_base},
                  {"pos_noise_gain", J.pos_noise_gain},
                  {"feature_noise", J.feature_noise},
                  {"feature_noise_gain", J.feature_noise_gain},
                  {"shift_gain", J.shift_gain},
                  {"spurious_prob", J.spurious_prob},
                  {"noise_seed", J.noise_seed}};
  const auto& C = P.camera;
  pj["camera"] = {{"height", C.height},
                  {"range", C.range},
                  {"half_fov", C.half_fov},
                  {"primitives_per_object", C.primitives_per_object},
                  {"dense_primitives", C.dense_primitives},
                  {"view_margin_range", C.view_margin_range},
                  {"view_margin_angle", C.view_margin_angle}};
  const auto& S = P.sim;
  pj["sim"] = {{"dt", S.dt},
               {"max_ticks", S.max_ticks},
               {"mapping_speed", S.mapping_speed},
               {"grid_resolution", S.grid_resolution},
               {"max_updates", S.max_updates},
               {"scan_radius", S.scan_radius},
               {"scan_poses", S.scan_poses},
               {"merge_radius", S.merge_radius},
               {"retry_budget", S.retry_budget},
               {"mesh_sigma", S.mesh_sigma},
               {"neighbor_radius", S.neighbor_radius},
               {"success_radius", S.success_radius},
               {"viewpoint_samples", S.viewpoint_samples},
               {"viewpoint_radius", S.viewpoint_radius}};
  doc["params"] = pj;
  return doc.dump(2) + "\n";
}

bool same_scenario(const Scenario& a, const Scenario& b) {
  return scenario_to_json(a) == scenario_to_json(b);
}

World::World(const Scenario& scenario) : seed_(scenario.seed), base_dir_(scenario.base_dir), rooms_(scenario.rooms) {
  for (const auto& spec : scenario.objects) {
    if (!known_ids_.insert(spec.id).second) throw ParseError("duplicate object id " + std::to_string(spec.id));
    objects_.emplace(spec.id, make_object(spec));
  }
  for (const auto& [id, obj] : objects_) {
    if (obj.spec.structural) structural_meshes_.push_back(obj.world_mesh);
  }
  if (!structural_meshes_.empty()) {
    structural_ = std::make_shared<MeshDistance>(merge_meshes(structural_meshes_));
  }
}

WorldObject World::make_object(const ObjectSpec& spec) {
  auto it = mesh_cache_.find(spec.mesh);
  if (it == mesh_cache_.end()) it = mesh_cache_.emplace(spec.mesh, resolve_mesh(spec.mesh, base_dir_)).first;
  const TriangleMesh& local = it->second;
  const auto b = local.bounds();
  if (spec.height && std::abs((b.max().z() - b.min().z()) - *spec.height) > 1e-3) {
    throw ParseError("object " + std::to_string(spec.id) + ": height does not match its mesh");
  }
  WorldObject o;
  o.spec = spec;
  o.feature = instance_feature(spec.category, seed_, spec.id);
  o.world_mesh = local.transformed(yaw_rotation(spec.pose.yaw), spec.pose.position);
  o.centroid = o.world_mesh.centroid();
  o.extent = o.world_mesh.bounds().sizes();
  assets_.add(spec.id, local);
  return o;
}

const WorldObject& World::object(std::int64_t id) const {
  auto it = objects_.find(id);
  if (it == objects_.end()) throw EventError("object " + std::to_string(id) + " is not present");
  return it->second;
}

void World::apply_event(const SceneEvent& event) {
  switch (event.kind) {
    case EventKind::kRelocate: {
      auto it = objects_.find(event.object_id);
      if (it == objects_.end()) throw EventError("relocate: object " + std::to_string(event.object_id) + " is not present");
      if (it->second.spec.structural) throw EventError("relocate: object " + std::to_string(event.object_id) + " is structural");
      if (!event.new_pose) throw EventError("relocate: missing new pose");
      ObjectSpec spec = it->second.spec;
      spec.pose = *event.new_pose;
      const std::string room = room_of(spec.pose.position.head<2>());
      if (!room.empty()) spec.room = room;
      it->second = make_object(spec);
      break;
    }
    case EventKind::kRemove: {
      auto it = objects_.find(event.object_id);
      if (it == objects_.end()) throw EventError("remove: object " + std::to_string(event.object_id) + " is not present");
      if (it->second.spec.structural) throw EventError("remove: object " + std::to_string(event.object_id) + " is structural");
      objects_.erase(it);
      break;
    }
    case EventKind::kAdd: {
      if (!event.object) throw EventError("add: missing object definition");
      if (event.object->id != event.object_id) throw EventError("add: object id mismatch");
      if (event.object->structural) throw EventError("add: structural objects cannot be added");
      if (known_ids_.count(event.object_id)) {
        throw EventError("add: id " + std::to_string(event.object_id) + " is already in use");
      }
      known_ids_.insert(event.object_id);
      objects_.emplace(event.object_id, make_object(*event.object));
      break;
    }
  }
  history_.push_back(event);
}

void World::apply_events_at(int tick, const std::vector<SceneEvent>& script) {
  for (const auto& e : script) {
    if (e.tick == tick) apply_event(e);
  }
}

bool World::occluded(const Vec3& from, const Vec3& to) const {
  return structural_ && structural_->segment_intersects(from, to);
}

std::string World::room_of(const Vec2& p) const {
  for (const auto& r : rooms_) {
    if (r.contains(p)) return r.name;
  }
  return {};
}

OccupancyGrid World::floor_grid(double resolution) const {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& r : rooms_) {
    for (const auto& p : r.polygon) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const double margin = 2.0 * resolution;
  lo -= Vec2::Constant(margin);
  hi += Vec2::Constant(margin);
  const int w = static_cast<int>(std::ceil((hi.x() - lo.x()) / resolution));
  const int h = static_cast<int>(std::ceil((hi.y() - lo.y()) / resolution));
  OccupancyGrid grid(lo, resolution, w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (room_of(grid.center(i, j)).empty()) grid.set(i, j, true);
    }
  }
  const Vec2 half = Vec2::Constant(0.5 * resolution);
  for (const auto& [id, obj] : objects_) {
    const auto b = obj.world_mesh.bounds();
    if (!obj.spec.structural && b.min().z() > 0.05) continue;  // resting on furniture
    grid.fill_rect(b.min().head<2>() - half, b.max().head<2>() + half);
  }
  return grid;
}

TriangleMesh World::scene_mesh(int levels) const {
  std::vector<TriangleMesh> parts;
  for (const auto& [id, obj] : objects_) parts.push_back(levels > 0 ? subdivide(obj.world_mesh, levels) : obj.world_mesh);
  return merge_meshes(parts);
}

Vec3 camera_position(const Pose2& pose, const CameraModel& camera) { return Vec3(pose.x, pose.y, camera.height); }

bool in_fov(const Pose2& pose, const Vec3& point, const CameraModel& camera, double range_margin,
            double angle_margin) {
  const Vec2 d = point.head<2>() - pose.position();
  const double dist = d.norm();
  if (dist > camera.range - range_margin) return false;
  if (dist == 0.0) return true;
  const double bearing = normalize_angle(std::atan2(d.y(), d.x()) - pose.theta);
  return std::abs(bearing) <= camera.half_fov - angle_margin;
}

namespace {

struct PrimitiveDraw {
  const JitterModel& jitter;
  double base;
  Vec3 shift;

  GaussianPrimitive operator()(std::mt19937_64& rng, const Vec3& surface_point, const VecX& feature,
                               std::int64_t id) const {
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    GaussianPrimitive p;
    p.id = id;
    double g = base * (1.0 + jitter.noise_rel * std::abs(unit(rng)));
    if (u01(rng) < jitter.spike_prob) g *= jitter.spike_min + (jitter.spike_max - jitter.spike_min) * u01(rng);
    p.instability = g;
    const double sigma = jitter.pos_noise_base + jitter.pos_noise_gain * g;
    p.position = surface_point + shift + sigma * Vec3(unit(rng), unit(rng), unit(rng));
    p.opacity = 0.5 + 0.5 * u01(rng);
    const double fs =
        (jitter.feature_noise + jitter.feature_noise_gain * g) / std::sqrt(static_cast<double>(feature.size()));
    VecX f = feature;
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] += fs * unit(rng);
    p.feature = f.normalized();
    return p;
  }
};

ObservedObject draw_object(const WorldObject& obj, const PrimitiveDraw& draw, std::uint64_t seed, int count) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(obj.spec.id)));
  const auto samples = sample_surface(obj.world_mesh, static_cast<std::size_t>(count), rng);
  ObservedObject o;
  o.object_id = obj.spec.id;
  o.category = obj.spec.category;
  o.room = obj.spec.room;
  o.extent = obj.extent;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    o.primitives.push_back(draw(rng, samples[k], obj.feature, static_cast<std::int64_t>(k)));
    o.primitives.back().object_id = obj.spec.id;
  }
  return o;
}

Vec3 tick_shift(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const double x = unit(rng);
  const double y = unit(rng);
  return Vec3(sigma * x, sigma * y, 0.0);
}

}  // namespace

ObservedObject observe_object(const World& world, std::int64_t object_id, const Pose2& /*pose*/, double v,
                              double kappa, const JitterModel& jitter, std::uint64_t stream_seed, int primitives) {
  const std::uint64_t base_seed = mix_seed(stream_seed, jitter.noise_seed);
  std::mt19937_64 tick_rng(base_seed);
  const PrimitiveDraw draw{jitter, jitter.base_instability(v, kappa), tick_shift(tick_rng, jitter.oscillation(v, kappa))};
  return draw_object(world.object(object_id), draw, base_seed, primitives);
}

Observation observe(const World& world, const Pose2& pose, double v, double kappa, const JitterModel& jitter,
                    const CameraModel& camera, std::uint64_t stream_seed, int primitives_per_object) {
  const std::uint64_t base_seed = mix_seed(stream_seed, jitter.noise_seed);
  std::mt19937_64 tick_rng(base_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const PrimitiveDraw draw{jitter, jitter.base_instability(v, kappa), tick_shift(tick_rng, jitter.oscillation(v, kappa))};
  const Vec3 cam = camera_position(pose, camera);

  Observation obs;
  for (const auto& [id, obj] : world.objects()) {
    if (obj.spec.structural) continue;
    if (!in_fov(pose, obj.centroid, camera)) continue;
    if (world.occluded(cam, obj.centroid)) continue;
    obs.objects.push_back(draw_object(obj, draw, base_seed, primitives_per_object));
  }

  if (u01(tick_rng) < jitter.spurious_prob) {
    // Single-tick phantom: a transient that is not part of the world.
    const double bearing = pose.theta + (2.0 * u01(tick_rng) - 1.0) * 0.8 * camera.half_fov;
    const double dist = 1.0 + (0.8 * camera.range - 1.0) * u01(tick_rng);
    const Vec3 c(pose.x + dist * std::cos(bearing), pose.y + dist * std::sin(bearing), 0.3 + 0.7 * u01(tick_rng));
    if (!world.occluded(cam, c)) {
      ObservedObject o;
      o.category = "clutter";
      o.room = world.room_of(c.head<2>());
      o.extent = Vec3::Constant(0.2);
      const VecX f = category_prototype(o.category);
      for (int k = 0; k < primitives_per_object; ++k) {
        const double dx = 2 * u01(tick_rng) - 1;
        const double dy = 2 * u01(tick_rng) - 1;
        const double dz = 2 * u01(tick_rng) - 1;
        o.primitives.push_back(draw(tick_rng, c + 0.1 * Vec3(dx, dy, dz), f, k));
      }
      obs.objects.push_back(std::move(o));
    }
  }
  return obs;
}

Vec3 top_center(const TriangleMesh& mesh) {
  const auto b = mesh.bounds();
  const Vec3 c = b.center();
  return Vec3(c.x(), c.y(), b.max().z());
}

std::optional<std::int64_t> ground_truth_target(const World& world, const Query& query) {
  const std::string cat = lower(query.object);
  for (const auto& [id, obj] : world.objects()) {
    if (!obj.spec.structural && lower(obj.spec.category) == cat && obj.spec.room == query.region) return id;
  }
  return std::nullopt;
}

Adjudication adjudicate(const World& world, const Query& query, TaskOutcome outcome, const StancePose* stance,
                        const ReachModel& reach, const ScenarioParams& params) {
  const auto target = ground_truth_target(world, query);
  switch (outcome) {
    case TaskOutcome::kFailed:
      return {false, "task failed before an interaction stance was reached"};
    case TaskOutcome::kRemovedReport:
      if (target) return {false, "removal reported but the object is present"};
      return {true, "removal reported and the object is gone"};
    case TaskOutcome::kArrived:
      break;
  }
  if (!target) return {false, "arrived but the object is not present"};
  if (!stance) return {false, "no final stance"};
  const WorldObject& obj = world.object(*target);
  const double dist = (Vec2(stance->x, stance->y) - obj.centroid.head<2>()).norm();
  if (dist > params.sim.success_radius) {
    return {false, "final stance " + format_sig9(dist) + " m from the object (obsolete location)"};
  }
  const MeshDistance scene(world.scene_mesh());
  const auto diag = ips(*stance, scene, top_center(obj.world_mesh), reach, params.ips.delta_safe);
  if (!diag.safe()) {
    std::string terms;
    if (!diag.i_col) terms += " collision";
    if (!diag.i_ik) terms += " reach";
    if (!diag.i_stab) terms += " stability";
    return {false, "stance not IPS-valid against ground truth:" + terms};
  }
  return {true, "IPS-valid stance at the object's current location"};
}

}  // namespace mif
