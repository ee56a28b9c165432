#include "mif/generator.hpp"

#include <algorithm>
#include <random>

namespace mif {

namespace {

struct FurnitureType {
  const char* category;
  double sx, sy, sz;
};

constexpr FurnitureType kFurniture[] = {
    {"desk", 1.2, 0.6, 0.75},    {"table", 1.0, 1.0, 0.72}, {"counter", 1.6, 0.5, 0.9},
    {"cabinet", 0.8, 0.45, 0.8}, {"shelf", 0.9, 0.4, 0.85},
};

const std::vector<std::string> kItems = {"mug",  "book", "laptop", "plant",    "bottle", "bowl",
                                         "lamp", "phone", "vase",  "keyboard", "can",    "box"};

struct Footprint {
  Vec2 lo, hi;
};

struct Placed {
  ObjectSpec spec;
  Footprint fp;
  double top = 0.0;
};

double rect_gap(const Footprint& a, const Footprint& b) {
  const double dx = std::max({0.0, a.lo.x() - b.hi.x(), b.lo.x() - a.hi.x()});
  const double dy = std::max({0.0, a.lo.y() - b.hi.y(), b.lo.y() - a.hi.y()});
  return std::max(dx, dy);
}

class Builder {
 public:
  Builder(std::uint64_t seed, ChangeType change, const GeneratorOptions& options)
      : rng_(seed), seed_(seed), change_(change), options_(options) {}

  // Returns false when the draw got stuck; the caller retries with a new stream.
  bool build(Scenario& out) {
    s_ = Scenario{};
    s_.seed = seed_;
    furniture_.clear();
    items_.clear();
    next_item_id_ = 100;

    const double w = uniform(7.0, 9.0);
    const double h = uniform(5.5, 7.0);
    s_.rooms.push_back({"office", {{0, 0}, {w, 0}, {w, h}, {0, h}}});
    std::vector<std::pair<std::string, std::pair<double, double>>> spans = {{"office", {0.0, w}}};
    if (options_.allow_second_room && uniform(0.0, 1.0) < 0.5) {
      const double w2 = uniform(4.0, 5.0);
      s_.rooms.push_back({"kitchen", {{w, 0}, {w + w2, 0}, {w + w2, h}, {w, h}}});
      spans.push_back({"kitchen", {w, w + w2}});
      const double door = uniform(1.5, h - 1.5);
      add_wall(w, 0.0, door - 0.6);
      add_wall(w, door + 0.6, h);
    }

    for (const auto& [room, span] : spans) {
      std::vector<int> types = {0, 1, 2, 3, 4};
      std::shuffle(types.begin(), types.end(), rng_);
      const int n = 3 + static_cast<int>(uniform(0.0, 1.0) < 0.5);
      for (int k = 0; k < n; ++k) place_furniture(room, span.first, span.second, kFurniture[types[k]], h);
      if (room_furniture(room).size() < 2) return false;

      std::vector<std::string> cats = kItems;
      std::shuffle(cats.begin(), cats.end(), rng_);
      const int m = 4 + static_cast<int>(uniform(0.0, 3.0));
      int placed = 0;
      for (const auto& c : cats) {
        if (placed == m) break;
        if (place_item(room, c)) ++placed;
      }
      if (placed < 2) return false;
    }

    // Target item and the scripted change.
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < items_.size(); ++k) candidates.push_back(k);
    const Placed target = items_[candidates[pick(candidates.size())]];
    s_.query = {target.spec.room, landmark_of(target), target.spec.category};

    if (change_ == ChangeType::kRelocation) {
      if (!relocate(target)) return false;
    } else if (change_ == ChangeType::kRemoval) {
      s_.events.push_back({0, EventKind::kRemove, target.spec.id, std::nullopt, std::nullopt});
    } else if (change_ == ChangeType::kAddition) {
      if (!add_new(target.spec.room)) return false;
    }

    for (const auto& f : furniture_) s_.objects.push_back(f.spec);
    for (const auto& it : items_) s_.objects.push_back(it.spec);
    for (const auto& wl : walls_) s_.objects.push_back(wl);

    if (options_.elevated_jitter) {
      s_.params.jitter.spike_prob = 0.2;
      s_.params.jitter.spurious_prob = 0.06;
      s_.params.jitter.noise_rel = 0.3;
    }
    if (!place_robot()) return false;
    s_.name = to_string(change_) + "_" + std::to_string(seed_);
    out = std::move(s_);
    return true;
  }

 private:
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  void add_wall(double x, double y0, double y1) {
    if (y1 - y0 < 0.05) return;
    ObjectSpec wall;
    wall.id = 1000 + static_cast<std::int64_t>(walls_.size());
    wall.category = "wall";
    wall.room = "office";
    wall.pose.position = Vec3(x, 0.5 * (y0 + y1), 0.0);
    wall.mesh = "primitive:box 0.1 " + format_sig9(y1 - y0) + " 2.5";
    wall.structural = true;
    walls_.push_back(wall);
  }

  std::vector<const Placed*> room_furniture(const std::string& room) const {
    std::vector<const Placed*> out;
    for (const auto& f : furniture_) {
      if (f.spec.room == room) out.push_back(&f);
    }
    return out;
  }

  std::string landmark_of(const Placed& item) const {
    const Vec2 c = item.spec.pose.position.head<2>();
    for (const auto& f : furniture_) {
      if (f.spec.room == item.spec.room && (c.array() >= f.fp.lo.array()).all() && (c.array() <= f.fp.hi.array()).all()) {
        return f.spec.category;
      }
    }
    return "";
  }

  void place_furniture(const std::string& room, double x0, double x1, const FurnitureType& t, double h) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const bool turned = uniform(0.0, 1.0) < 0.5;
      const double fx = turned ? t.sy : t.sx;
      const double fy = turned ? t.sx : t.sy;
      const double lo_x = x0 + 0.9 + 0.5 * fx;
      const double hi_x = x1 - 0.9 - 0.5 * fx;
      const double lo_y = 0.9 + 0.5 * fy;
      const double hi_y = h - 0.9 - 0.5 * fy;
      if (lo_x >= hi_x || lo_y >= hi_y) return;
      const Vec2 c(uniform(lo_x, hi_x), uniform(lo_y, hi_y));
      const Footprint fp{c - 0.5 * Vec2(fx, fy), c + 0.5 * Vec2(fx, fy)};
      bool ok = true;
      for (const auto& f : furniture_) {
        if (f.spec.room == room && rect_gap(fp, f.fp) < 1.0) ok = false;
      }
      if (!ok || !spacing_ok(Vec2(c), nullptr)) continue;
      Placed p;
      p.spec.id = 1 + static_cast<std::int64_t>(furniture_.size());
      p.spec.category = t.category;
      p.spec.room = room;
      p.spec.pose.position = Vec3(c.x(), c.y(), 0.0);
      p.spec.pose.yaw = turned ? kPi / 2 : 0.0;
      p.spec.mesh = "primitive:box " + format_sig9(t.sx) + " " + format_sig9(t.sy) + " " + format_sig9(t.sz);
      p.fp = fp;
      p.top = t.sz;
      furniture_.push_back(p);
      return;
    }
  }

  // Horizontal centre distances between objects stay clear of the next_to
  // radius so that edges do not flicker under sensor noise.
  bool spacing_ok(const Vec2& c, const Placed* ignore) const {
    auto bad = [&](const Placed& o) {
      if (&o == ignore) return false;
      const double d = (o.spec.pose.position.head<2>() - c).norm();
      return d >= 0.8 && d <= 1.2;
    };
    for (const auto& f : furniture_) {
      if (bad(f)) return false;
    }
    for (const auto& it : items_) {
      if (bad(it)) return false;
    }
    return true;
  }

  // Draws an item shape and a spot near the edge of `f`.
  std::optional<Placed> item_on(const Placed& f, const std::string& category, const Placed* ignore) {
    Placed p;
    p.spec.category = category;
    p.spec.room = f.spec.room;
    const double height = uniform(0.08, std::min(0.2, 1.02 - f.top));
    double half = 0.0;
    if (uniform(0.0, 1.0) < 0.5) {
      const double r = uniform(0.035, 0.06);
      half = r;
      p.spec.mesh = "primitive:cylinder " + format_sig9(r) + " " + format_sig9(height) + " 16";
    } else {
      const double a = uniform(0.08, 0.18);
      const double b = uniform(0.08, 0.18);
      half = 0.5 * std::sqrt(a * a + b * b);
      p.spec.mesh = "primitive:box " + format_sig9(a) + " " + format_sig9(b) + " " + format_sig9(height);
      p.spec.pose.yaw = uniform(-kPi, kPi);
    }
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int side = static_cast<int>(pick(4));
      const double inset = half + uniform(0.01, 0.04);
      Vec2 c;
      if (side < 2) {
        c.x() = uniform(f.fp.lo.x() + half, f.fp.hi.x() - half);
        c.y() = side == 0 ? f.fp.lo.y() + inset : f.fp.hi.y() - inset;
      } else {
        c.y() = uniform(f.fp.lo.y() + half, f.fp.hi.y() - half);
        c.x() = side == 2 ? f.fp.lo.x() + inset : f.fp.hi.x() - inset;
      }
      bool ok = spacing_ok(c, ignore);
      for (const auto& it : items_) {
        if (&it != ignore && (it.spec.pose.position.head<2>() - c).norm() < 0.3) ok = false;
      }
      if (!ok) continue;
      p.spec.pose.position = Vec3(c.x(), c.y(), f.top);
      p.fp = {c - Vec2::Constant(half), c + Vec2::Constant(half)};
      p.top = f.top + height;
      return p;
    }
    return std::nullopt;
  }

  bool place_item(const std::string& room, const std::string& category) {
    const auto fs = room_furniture(room);
    const Placed& f = *fs[pick(fs.size())];
    auto p = item_on(f, category, nullptr);
    if (!p) return false;
    p->spec.id = next_item_id_++;
    items_.push_back(*p);
    return true;
  }

  bool relocate(const Placed& target) {
    const Placed* self = nullptr;
    for (const auto& it : items_) {
      if (it.spec.id == target.spec.id) self = &it;
    }
    const auto fs = room_furniture(target.spec.room);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Placed& f = *fs[pick(fs.size())];
      if (landmark_of(target) == f.spec.category) continue;
      auto p = item_on(f, target.spec.category, self);
      if (!p) continue;
      const double d = (p->spec.pose.position - target.spec.pose.position).head<2>().norm();
      if (d < 1.5 || d > 3.0) continue;
      ObjectPose pose{p->spec.pose.position, target.spec.pose.yaw};
      s_.events.push_back({0, EventKind::kRelocate, target.spec.id, pose, std::nullopt});
      return true;
    }
    return false;
  }

  bool add_new(const std::string& room) {
    std::vector<std::string> unused;
    for (const auto& c : kItems) {
      bool used = false;
      for (const auto& it : items_) {
        if (it.spec.room == room && it.spec.category == c) used = true;
      }
      if (!used) unused.push_back(c);
    }
    if (unused.empty()) return false;
    const std::string cat = unused[pick(unused.size())];
    const auto fs = room_furniture(room);
    for (int attempt = 0; attempt < 20; ++attempt) {
      const Placed& f = *fs[pick(fs.size())];
      auto p = item_on(f, cat, nullptr);
      if (!p) continue;
      p->spec.id = 500;
      s_.events.push_back({0, EventKind::kAdd, p->spec.id, std::nullopt, p->spec});
      s_.query = {room, f.spec.category, cat};
      return true;
    }
    return false;
  }

  bool place_robot() {
    const World world(s_);
    const OccupancyGrid grid =
        world.floor_grid(s_.params.sim.grid_resolution)
            .inflated(body_circumscribed_radius(s_.robot.stance) + s_.params.ips.delta_safe + 0.1);
    Vec2 target = Vec2::Zero();
    for (const auto& o : s_.objects) {
      if (o.category == s_.query.object && o.room == s_.query.region) target = o.pose.position.head<2>();
    }
    for (const auto& e : s_.events) {
      if (e.object) target = e.object->pose.position.head<2>();
    }
    const auto& office = s_.rooms.front().polygon;
    for (int attempt = 0; attempt < 500; ++attempt) {
      const Vec2 p(uniform(office[0].x() + 0.5, office[1].x() - 0.5), uniform(office[0].y() + 0.5, office[2].y() - 0.5));
      if (grid.blocked(p) || (p - target).norm() < 2.5) continue;
      s_.robot.start = {p.x(), p.y(), uniform(-kPi, kPi)};
      return true;
    }
    return false;
  }

  std::mt19937_64 rng_;
  std::uint64_t seed_;
  ChangeType change_;
  GeneratorOptions options_;
  Scenario s_;
  std::vector<Placed> furniture_;
  std::vector<Placed> items_;
  std::vector<ObjectSpec> walls_;
  std::int64_t next_item_id_ = 100;
};

}  // namespace

std::string to_string(ChangeType change) {
  switch (change) {
    case ChangeType::kNone:
      return "none";
    case ChangeType::kRelocation:
      return "relocation";
    case ChangeType::kRemoval:
      return "removal";
    case ChangeType::kAddition:
      return "addition";
  }
  return "none";
}

ChangeType change_from_string(const std::string& s) {
  if (s == "none") return ChangeType::kNone;
  if (s == "relocation") return ChangeType::kRelocation;
  if (s == "removal") return ChangeType::kRemoval;
  if (s == "addition") return ChangeType::kAddition;
  throw ParseError("unknown change type '" + s + "' (none, relocation, removal, addition)");
}

Scenario generate_scenario(std::uint64_t seed, ChangeType change, const GeneratorOptions& options) {
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Builder b(attempt == 0 ? seed : mix_seed(seed, attempt), change, options);
    Scenario s;
    if (b.build(s)) {
      s.seed = seed;
      s.name = to_string(change) + "_" + std::to_string(seed);
      return s;
    }
  }
  throw std::runtime_error("scenario generator could not place a layout for seed " + std::to_string(seed));
}

std::vector<SuiteEntry> generate_adaptation_suite(int per_type, std::uint64_t base_seed) {
  std::vector<SuiteEntry> suite;
  for (ChangeType c : {ChangeType::kRelocation, ChangeType::kRemoval, ChangeType::kAddition}) {
    for (int k = 0; k < per_type; ++k) {
      const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(c) * 100000 + k);
      suite.push_back({generate_scenario(seed % 1000000007ULL, c), to_string(c)});
    }
  }
  return suite;
}

std::vector<SuiteEntry> generate_sweep_suite(int changed, int unchanged, std::uint64_t base_seed) {
  std::vector<SuiteEntry> suite;
  const ChangeType cycle[] = {ChangeType::kRelocation, ChangeType::kRemoval, ChangeType::kAddition};
  for (int k = 0; k < changed; ++k) {
    const std::uint64_t seed = mix_seed(base_seed, 500000 + k) % 1000000007ULL;
    suite.push_back({generate_scenario(seed, cycle[k % 3]), to_string(cycle[k % 3])});
  }
  for (int k = 0; k < unchanged; ++k) {
    GeneratorOptions o;
    o.elevated_jitter = k % 2 == 1;
    const std::uint64_t seed = mix_seed(base_seed, 700000 + k) % 1000000007ULL;
    Scenario s = generate_scenario(seed, ChangeType::kNone, o);
    if (o.elevated_jitter) s.name += "_noisy";
    suite.push_back({std::move(s), "none"});
  }
  return suite;
}

}  // namespace mif
