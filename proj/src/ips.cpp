#include "mif/ips.hpp"

#include <algorithm>
#include <limits>

namespace mif {

StancePose StancePose::with_default_body(double x, double y, double heading) {
  StancePose p;
  p.x = x;
  p.y = y;
  p.heading = normalize_angle(heading);
  p.body = {{Vec3(0.0, 0.0, 0.25), 0.22}, {Vec3(0.0, 0.0, 0.65), 0.22}, {Vec3(0.0, 0.0, 1.05), 0.20}};
  p.feet[0].offset = Vec2(0.0, 0.1);
  p.feet[1].offset = Vec2(0.0, -0.1);
  return p;
}

Vec3 StancePose::to_world(const Vec3& offset) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return Vec3(x + c * offset.x() - s * offset.y(), y + s * offset.x() + c * offset.y(), offset.z());
}

void ReachModel::validate() const {
  if (!(r_min > 0.0 && r_min < r_max)) throw std::invalid_argument("reach model needs 0 < r_min < r_max");
}

std::vector<Sphere> posed_body(const StancePose& pose) {
  std::vector<Sphere> out;
  out.reserve(pose.body.size());
  for (const auto& s : pose.body) out.push_back({pose.to_world(s.center), s.radius});
  return out;
}

double body_circumscribed_radius(const StancePose& pose) {
  double r = 0.0;
  for (const auto& s : pose.body) r = std::max(r, s.center.head<2>().norm() + s.radius);
  return r;
}

double min_clearance(std::span<const Sphere> world_spheres, const MeshDistance& mesh) {
  if (world_spheres.empty()) throw EmptyInput("body proxy has no spheres");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : world_spheres) best = std::min(best, mesh.signed_distance(s.center) - s.radius);
  return best;
}

double min_clearance(std::span<const Sphere> world_spheres, const TriangleMesh& mesh) {
  return min_clearance(world_spheres, MeshDistance(mesh));
}

bool check_collision(const StancePose& pose, const MeshDistance& mesh, double delta_safe) {
  const auto body = posed_body(pose);
  return min_clearance(body, mesh) > delta_safe;
}

Vec3 shoulder_position(const StancePose& pose, const ReachModel& reach) {
  return pose.to_world(reach.shoulder_offset);
}

namespace {

constexpr double kReachStep = 0.01;
constexpr double kContactAllowance = 0.05;

bool segment_clear(const Vec3& from, const Vec3& to, const MeshDistance& mesh) {
  const Vec3 d = to - from;
  const double len = d.norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / kReachStep)));
  for (int i = 0; i <= n; ++i) {
    const Vec3 p = from + (static_cast<double>(i) / n) * d;
    if ((to - p).norm() <= kContactAllowance) continue;
    if (!(mesh.signed_distance(p) > 0.0)) return false;
  }
  return true;
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

bool check_reach(const StancePose& pose, const Vec3& t_obj, const ReachModel& reach,
                 const MeshDistance& mesh) {
  const Vec3 shoulder = shoulder_position(pose, reach);
  const double dist = (t_obj - shoulder).norm();
  if (dist < reach.r_min || dist > reach.r_max) return false;
  return segment_clear(shoulder, t_obj, mesh);
}

std::vector<Vec2> support_polygon(const StancePose& pose) {
  std::vector<Vec2> corners;
  for (const auto& f : pose.feet) {
    if (!(f.length > 0.0 && f.width > 0.0)) throw DegenerateSupport("foot rectangle has no area");
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        const Vec3 local(f.offset.x() + 0.5 * sx * f.length, f.offset.y() + 0.5 * sy * f.width, 0.0);
        corners.push_back(pose.to_world(local).head<2>());
      }
    }
  }
  return convex_hull(std::move(corners));
}

double support_depth(std::span<const Vec2> hull, const Vec2& point) {
  if (hull.size() < 3) throw DegenerateSupport("support hull has fewer than 3 vertices");
  double area2 = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    area2 += a.x() * b.y() - b.x() * a.y();
  }
  if (!(std::abs(area2) > 1e-12)) throw DegenerateSupport("support hull has zero area");
  const double orient = area2 > 0 ? 1.0 : -1.0;
  double depth = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    const Vec2 e = b - a;
    const Vec2 inward = orient * Vec2(-e.y(), e.x()) / e.norm();
    depth = std::min(depth, inward.dot(point - a));
  }
  return depth;
}

bool check_stability(const StancePose& pose, const Vec3& com) {
  const auto hull = support_polygon(pose);
  return support_depth(hull, com.head<2>()) > kSupportShrink;
}

IpsDiagnostics ips(const StancePose& pose, const MeshDistance& mesh, const Vec3& t_obj,
                   const ReachModel& reach, double delta_safe) {
  IpsDiagnostics d;
  const auto body = posed_body(pose);
  d.clearance_m = min_clearance(body, mesh);
  d.i_col = d.clearance_m > delta_safe;
  d.reach_m = (t_obj - shoulder_position(pose, reach)).norm();
  d.i_ik = check_reach(pose, t_obj, reach, mesh);
  const auto hull = support_polygon(pose);
  d.stability_margin_m = support_depth(hull, pose.com().head<2>()) - kSupportShrink;
  d.i_stab = d.stability_margin_m > 0.0;
  return d;
}

StancePose face_target(StancePose pose, const Vec3& t_obj) {
  const double dx = t_obj.x() - pose.x;
  const double dy = t_obj.y() - pose.y;
  if (dx != 0.0 || dy != 0.0) pose.heading = normalize_angle(std::atan2(dy, dx));
  return pose;
}

StancePose micro_adjust_stance(const StancePose& initial, const MeshDistance& mesh,
                               const Vec3& t_obj, const ReachModel& reach,
                               const MicroAdjustOptions& options) {
  int tried = 0;
  auto accept = [&](const StancePose& p) {
    ++tried;
    if (options.admissible && !options.admissible(p)) return false;
    return ips(p, mesh, t_obj, reach, options.delta_safe).safe();
  };
  if (options.max_candidates <= 0) throw NoFeasibleStance("candidate budget is zero");
  if (accept(initial)) return initial;
  for (double r : options.ring_radii) {
    for (int k = 0; k < options.ring_positions; ++k) {
      if (tried >= options.max_candidates) throw NoFeasibleStance("candidate budget exhausted");
      const double a = initial.heading + 2.0 * kPi * k / options.ring_positions;
      StancePose cand = initial;
      cand.x = initial.x + r * std::cos(a);
      cand.y = initial.y + r * std::sin(a);
      cand = face_target(cand, t_obj);
      if (accept(cand)) return cand;
    }
  }
  throw NoFeasibleStance("no IPS-valid stance among ring candidates");
}

}  // namespace mif
