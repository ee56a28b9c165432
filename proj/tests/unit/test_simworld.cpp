#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mif/simworld.hpp"

using namespace mif;

namespace {

const char* kMinimal = R"({
  "seed": 7,
  "rooms": [{"name": "office", "polygon": [[0, 0], [6, 0], [6, 5], [0, 5]]}],
  "objects": [{"id": 1, "category": "mug", "room": "office",
               "pose": {"position": [3, 2.5, 0.75], "yaw": 0}, "mesh": "primitive:cylinder 0.05 0.12"}],
  "events": [],
  "robot": {"start": [1, 2.5, 0]},
  "query": {"region": "office", "landmark": "", "object": "mug"}
})";

// Two objects, a wall between the second one and the camera at the origin.
const char* kWalled = R"({
  "seed": 3,
  "rooms": [{"name": "office", "polygon": [[-1, -3], [8, -3], [8, 3], [-1, 3]]}],
  "objects": [
    {"id": 1, "category": "mug", "room": "office", "pose": {"position": [2.5, 1.0, 0.0], "yaw": 0},
     "mesh": "primitive:box 0.2 0.2 0.3"},
    {"id": 2, "category": "book", "room": "office", "pose": {"position": [2.5, -1.0, 0.0], "yaw": 0},
     "mesh": "primitive:box 0.2 0.2 0.3"},
    {"id": 9, "category": "wall", "room": "office", "pose": {"position": [1.5, -1.0, 0.0], "yaw": 0},
     "mesh": "primitive:box 0.1 1.2 2.5", "structural": true}
  ],
  "events": [],
  "robot": {"start": [0, 0, 0]},
  "query": {"region": "office", "landmark": "", "object": "mug"}
})";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

JitterModel quiet() {
  JitterModel j;
  j.noise_rel = 0.0;
  j.spike_prob = 0.0;
  j.spurious_prob = 0.0;
  return j;
}

double mean_g(const ObservedObject& o) {
  double s = 0.0;
  for (const auto& p : o.primitives) s += p.instability;
  return s / static_cast<double>(o.primitives.size());
}

}  // namespace

TEST_CASE("minimal scenario loads") {
  const Scenario s = parse_scenario(kMinimal);
  CHECK(s.objects.size() == 1);
  CHECK(s.events.empty());
  CHECK(s.seed == 7);
  const World w(s);
  CHECK(w.objects().size() == 1);
  CHECK(w.room_of(Vec2(3, 2.5)) == "office");
  CHECK(w.room_of(Vec2(7, 2.5)).empty());
  CHECK(ground_truth_target(w, s.query) == 1);
}

TEST_CASE("scenario schema errors") {
  std::string dup = kMinimal;
  const auto pos = dup.find("\"events\"");
  dup.insert(pos, R"("objects_extra": 0, )");
  CHECK_THROWS_AS(parse_scenario(dup), ParseError);  // unknown key

  std::string two = kMinimal;
  two.replace(two.find("\"events\": []"), 12,
              R"("events": [{"tick": 0, "kind": "add", "object": {"id": 1, "category": "bowl", "room": "office",
                 "pose": {"position": [1, 1, 0], "yaw": 0}, "mesh": "primitive:box 0.1 0.1 0.1"}}])");
  CHECK_THROWS_AS(parse_scenario(two), ParseError);  // duplicate id

  World w(parse_scenario(kMinimal));
  SceneEvent add;
  add.kind = EventKind::kAdd;
  add.object_id = 1;
  add.object = ObjectSpec{1, "bowl", "office", ObjectPose{Vec3(1, 1, 0), 0.0}, "primitive:box 0.1 0.1 0.1", {}, false};
  CHECK_THROWS_AS(w.apply_event(add), EventError);  // id already present

  CHECK_THROWS_AS(parse_scenario("{\"seed\": 1,"), ParseError);
  try {
    std::string bad = kMinimal;
    bad.replace(bad.find("\"seed\": 7"), 9, "\"seed\": \"x\"");
    parse_scenario(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_mesh("primitive:torus 1", "."), ParseError);
  CHECK_THROWS_AS(resolve_mesh("missing.obj", "/nonexistent"), AssetNotFound);
}

TEST_CASE("scenario round trip") {
  const Scenario s = parse_scenario(kMinimal);
  CHECK(same_scenario(parse_scenario(scenario_to_json(s)), s));
  const Scenario ex = load_scenario(MIF_SOURCE_DIR "/scenarios/example.json");
  const Scenario back = parse_scenario(scenario_to_json(ex), ex.base_dir);
  CHECK(same_scenario(back, ex));
  CHECK(scenario_to_json(back) == scenario_to_json(ex));
  // the asset path resolves against the scenario's directory
  const World w(ex);
  CHECK(w.object(100).world_mesh.triangles().size() > 12);
}

TEST_CASE("events") {
  const Scenario s = parse_scenario(kMinimal);
  World w(s);
  const Vec3 c0 = w.object(1).centroid;

  SceneEvent move;
  move.kind = EventKind::kRelocate;
  move.object_id = 1;
  move.new_pose = ObjectPose{Vec3(4.5, 1.0, 0.75), 0.3};
  w.apply_event(move);
  CHECK((w.object(1).centroid - c0 - Vec3(1.5, -1.5, 0.0)).norm() < 1e-12);

  SceneEvent remove;
  remove.kind = EventKind::kRemove;
  remove.object_id = 1;
  w.apply_event(remove);
  CHECK(!w.present(1));
  CHECK(w.ever_existed(1));
  CHECK(!ground_truth_target(w, s.query));
  CHECK_THROWS_AS(w.apply_event(remove), EventError);
  CHECK_THROWS_AS(w.apply_event(move), EventError);

  SceneEvent add;
  add.kind = EventKind::kAdd;
  add.object = ObjectSpec{2, "mug", "office", ObjectPose{Vec3(1, 1, 0), 0.0}, "primitive:box 0.1 0.1 0.1", {}, false};
  add.object_id = 2;
  add.tick = 5;
  w.apply_events_at(4, {add});
  CHECK(!w.present(2));
  w.apply_events_at(5, {add});
  CHECK(w.present(2));
  CHECK(ground_truth_target(w, s.query) == 2);
  CHECK(w.history().size() == 3);
}

TEST_CASE("observation model") {
  const Scenario s = parse_scenario(kWalled);
  const World w(s);
  const Pose2 origin{0, 0, 0};
  CameraModel cam = s.params.camera;
  JitterModel j = quiet();

  SUBCASE("occlusion") {
    const Observation o = observe(w, origin, 0.0, 0.0, j, cam, 1, 16);
    std::set<std::int64_t> seen;
    for (const auto& obj : o.objects) seen.insert(*obj.object_id);
    CHECK(seen == std::set<std::int64_t>{1});
    CHECK(w.occluded(camera_position(origin, cam), w.object(2).centroid));
    CHECK(!w.occluded(camera_position(origin, cam), w.object(1).centroid));
  }
  SUBCASE("field of view") {
    const Observation o = observe(w, Pose2{0, 0, kPi}, 0.0, 0.0, j, cam, 1, 16);
    CHECK(o.objects.empty());
    CHECK(in_fov(origin, Vec3(2, 0, 1), cam));
    CHECK(!in_fov(origin, Vec3(-2, 0, 1), cam));
    CHECK(!in_fov(origin, Vec3(cam.range + 0.5, 0, 1), cam));
  }
  SUBCASE("stationary robot with no base amplitude is stable") {
    j.amp0 = 0.0;
    j.spike_prob = 0.5;
    j.noise_rel = 0.3;
    const ObservedObject o = observe_object(w, 1, origin, 0.0, 0.0, j, 5, 64);
    for (const auto& p : o.primitives) CHECK(p.instability == 0.0);
  }
  SUBCASE("instability grows with speed and curvature") {
    double prev = -1.0;
    for (double v : {0.0, 0.1, 0.3, 0.5}) {
      const double g = mean_g(observe_object(w, 1, origin, v, 0.2, j, 5, 32));
      CHECK(g > prev);
      CHECK(g == doctest::Approx(j.base_instability(v, 0.2)));
      prev = g;
    }
    CHECK(mean_g(observe_object(w, 1, origin, 0.3, 1.0, j, 5, 32)) >
          mean_g(observe_object(w, 1, origin, 0.3, 0.1, j, 5, 32)));
  }
  SUBCASE("seeded draws repeat") {
    j = s.params.jitter;
    const Observation a = observe(w, origin, 0.4, 0.5, j, cam, 99, 24);
    const Observation b = observe(w, origin, 0.4, 0.5, j, cam, 99, 24);
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t k = 0; k < a.objects.size(); ++k) {
      REQUIRE(a.objects[k].primitives.size() == b.objects[k].primitives.size());
      for (std::size_t i = 0; i < a.objects[k].primitives.size(); ++i) {
        CHECK(a.objects[k].primitives[i].position == b.objects[k].primitives[i].position);
        CHECK(a.objects[k].primitives[i].instability == b.objects[k].primitives[i].instability);
      }
    }
    const Observation c = observe(w, origin, 0.4, 0.5, j, cam, 100, 24);
    CHECK(c.objects.at(0).primitives.at(0).position != a.objects.at(0).primitives.at(0).position);
  }
  SUBCASE("features are unit and category-driven") {
    const VecX a = instance_feature("mug", 1, 1);
    const VecX b = instance_feature("mug", 1, 2);
    const VecX c = instance_feature("book", 1, 1);
    CHECK(std::abs(a.norm() - 1.0) < 1e-12);
    CHECK(a.size() == kLatentDim);
    CHECK(a.dot(b) > a.dot(c));
    CHECK(instance_feature("mug", 1, 1) == a);
  }
}

TEST_CASE("adjudication") {
  const Scenario s = parse_scenario(kMinimal);
  World w(s);
  CHECK(!adjudicate(w, s.query, TaskOutcome::kRemovedReport, nullptr, s.robot.reach, s.params).success);
  CHECK(!adjudicate(w, s.query, TaskOutcome::kFailed, nullptr, s.robot.reach, s.params).success);

  // a stance far from the object
  const StancePose far = StancePose::with_default_body(0.8, 0.8, 0.0);
  CHECK(!adjudicate(w, s.query, TaskOutcome::kArrived, &far, s.robot.reach, s.params).success);

  // a stance facing the object within reach
  const Vec3 c = w.object(1).centroid;
  const StancePose near = StancePose::with_default_body(c.x() - 0.55, c.y(), 0.0);
  const Adjudication ok = adjudicate(w, s.query, TaskOutcome::kArrived, &near, s.robot.reach, s.params);
  CHECK_MESSAGE(ok.success, ok.reason);

  SceneEvent remove;
  remove.kind = EventKind::kRemove;
  remove.object_id = 1;
  w.apply_event(remove);
  CHECK(adjudicate(w, s.query, TaskOutcome::kRemovedReport, nullptr, s.robot.reach, s.params).success);
  CHECK(!adjudicate(w, s.query, TaskOutcome::kArrived, &near, s.robot.reach, s.params).success);
}
