#include "mif/navigation.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace mif {

OccupancyGrid::OccupancyGrid(Vec2 origin, double resolution, int width, int height)
    : origin_(std::move(origin)), resolution_(resolution), width_(width), height_(height) {
  if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid must have a positive extent");
  cells_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::pair<int, int> OccupancyGrid::cell_of(const Vec2& p) const {
  return {static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
          static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_))};
}

Vec2 OccupancyGrid::center(int i, int j) const {
  return origin_ + resolution_ * Vec2(i + 0.5, j + 0.5);
}

bool OccupancyGrid::blocked(const Vec2& p) const {
  const auto [i, j] = cell_of(p);
  return !in_bounds(i, j) || occupied(i, j);
}

void OccupancyGrid::fill_rect(const Vec2& lo, const Vec2& hi) {
  for (int j = 0; j < height_; ++j) {
    for (int i = 0; i < width_; ++i) {
      const Vec2 c = center(i, j);
      if (c.x() >= lo.x() && c.x() <= hi.x() && c.y() >= lo.y() && c.y() <= hi.y()) set(i, j, true);
    }
  }
}

OccupancyGrid OccupancyGrid::inflated(double radius) const {
  OccupancyGrid out = *this;
  if (radius <= 0.0) return out;
  const int reach = static_cast<int>(std::ceil(radius / resolution_));
  const double r2 = radius * radius;
  for (int j = 0; j < height_; ++j) {
    for (int i = 0; i < width_; ++i) {
      if (!occupied(i, j)) continue;
      for (int dj = -reach; dj <= reach; ++dj) {
        for (int di = -reach; di <= reach; ++di) {
          const int ni = i + di;
          const int nj = j + dj;
          if (!in_bounds(ni, nj)) continue;
          const double d2 = (di * di + dj * dj) * resolution_ * resolution_;
          if (d2 <= r2) out.set(ni, nj, true);
        }
      }
    }
  }
  return out;
}

double path_length(std::span<const Vec2> path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += (path[i] - path[i - 1]).norm();
  return len;
}

double PlannedPath::length() const { return path_length(waypoints); }

bool line_of_sight(const OccupancyGrid& grid, const Vec2& a, const Vec2& b) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * grid.resolution()))));
  for (int k = 0; k <= n; ++k) {
    if (grid.blocked(a + (static_cast<double>(k) / n) * (b - a))) return false;
  }
  return true;
}

Vec2 nearest_free(const OccupancyGrid& grid, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 out = p;
  for (int j = 0; j < grid.height(); ++j) {
    for (int i = 0; i < grid.width(); ++i) {
      if (grid.occupied(i, j)) continue;
      const double d = (grid.center(i, j) - p).squaredNorm();
      if (d < best) {
        best = d;
        out = grid.center(i, j);
      }
    }
  }
  if (!std::isfinite(best)) throw NoPath("grid has no free cell");
  return out;
}

PlannedPath plan_path(const OccupancyGrid& grid, const Vec2& start, const Vec2& goal, double inflation) {
  OccupancyGrid g = grid.inflated(inflation);
  const auto [si, sj] = g.cell_of(start);
  const auto [gi, gj] = g.cell_of(goal);
  if (!g.in_bounds(si, sj)) throw NoPath("start outside the grid");
  if (!g.in_bounds(gi, gj)) throw NoPath("goal outside the grid");
  if (g.occupied(gi, gj)) throw NoPath("goal is occupied after inflation");
  g.set(si, sj, false);

  const int w = g.width();
  const int n = w * g.height();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  const int s = sj * w + si;
  const int t = gj * w + gi;
  dist[s] = 0.0;
  open.push({0.0, s});
  const double diag = std::sqrt(2.0);
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (d > dist[u]) continue;
    if (u == t) break;
    const int ui = u % w;
    const int uj = u / w;
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        const int vi = ui + di;
        const int vj = uj + dj;
        if (!g.in_bounds(vi, vj) || g.occupied(vi, vj)) continue;
        if (di != 0 && dj != 0 && (g.occupied(ui + di, uj) || g.occupied(ui, uj + dj))) continue;
        const int v = vj * w + vi;
        const double nd = d + (di != 0 && dj != 0 ? diag : 1.0);
        if (nd < dist[v]) {
          dist[v] = nd;
          parent[v] = u;
          open.push({nd, v});
        }
      }
    }
  }
  if (!std::isfinite(dist[t])) throw NoPath("goal unreachable from start");

  PlannedPath out;
  out.grid_cost = dist[t] * g.resolution();
  for (int v = t; v != -1; v = parent[v]) out.grid_path.push_back(g.center(v % w, v / w));
  std::reverse(out.grid_path.begin(), out.grid_path.end());

  // Shortcut over the raw path, with the exact start and goal as endpoints.
  std::vector<Vec2> raw = out.grid_path;
  raw.front() = start;
  if (raw.size() > 1) {
    raw.back() = goal;
  } else {
    raw.push_back(goal);
  }
  std::size_t i = 0;
  out.waypoints.push_back(raw.front());
  while (i + 1 < raw.size()) {
    std::size_t j = raw.size() - 1;
    while (j > i + 1 && !line_of_sight(g, raw[i], raw[j])) --j;
    out.waypoints.push_back(raw[j]);
    i = j;
  }
  return out;
}

void TrackingParams::validate() const {
  if (!(L_min > 0.0 && L_min <= L0 && L0 <= L_max)) throw std::invalid_argument("need 0 < L_min <= L0 <= L_max");
  if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
  if (k_theta < 0.0 || k_v < 0.0) throw std::invalid_argument("gains must be non-negative");
  if (!(delta_arrival > 0.0)) throw std::invalid_argument("delta_arrival must be positive");
  if (v_stall < 0.0 || v_stall >= v_max) throw std::invalid_argument("need 0 <= v_stall < v_max");
}

VelocityCommand adaptive_velocity(double delta_theta, const TrackingParams& params) {
  VelocityCommand c;
  c.v = params.v_max * std::max(0.0, 1.0 - params.k_theta * std::abs(delta_theta));
  c.lookahead = std::clamp(params.L0 + params.k_v * c.v, params.L_min, params.L_max);
  return c;
}

double distance_to_path(std::span<const Vec2> path, const Vec2& p, double* arc) {
  if (path.empty()) throw NoPath("empty path");
  double best = (path[0] - p).norm();
  double best_arc = 0.0;
  double s = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec2 a = path[i - 1];
    const Vec2 e = path[i] - a;
    const double len2 = e.squaredNorm();
    const double len = std::sqrt(len2);
    const double u = len2 > 0.0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
    const double d = (a + u * e - p).norm();
    if (d < best) {
      best = d;
      best_arc = s + u * len;
    }
    s += len;
  }
  if (arc) *arc = best_arc;
  return best;
}

Vec2 point_at_arc(std::span<const Vec2> path, double s) {
  if (path.empty()) throw NoPath("empty path");
  if (s <= 0.0) return path.front();
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double len = (path[i] - path[i - 1]).norm();
    if (s <= len && len > 0.0) return path[i - 1] + (s / len) * (path[i] - path[i - 1]);
    s -= len;
  }
  return path.back();
}

Vec2 goal_point(std::span<const Vec2> path, const Vec2& p, double s0, double L) {
  // First point past the closest point whose distance from p reaches L.
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Vec2 a0 = path[k];
    const Vec2 b = path[k + 1];
    const double len = (b - a0).norm();
    if (acc + len < s0) {
      acc += len;
      continue;
    }
    const Vec2 a = len > 0.0 ? Vec2(a0 + (b - a0) * std::max(0.0, s0 - acc) / len) : a0;
    acc += len;
    if ((b - p).norm() < L) continue;
    const Vec2 d = b - a;
    const Vec2 f = a - p;
    const double qa = d.squaredNorm();
    if (qa == 0.0) return b;
    const double qb = 2.0 * f.dot(d);
    const double qc = f.squaredNorm() - L * L;
    const double t = (-qb + std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc))) / (2.0 * qa);
    return a + std::clamp(t, 0.0, 1.0) * d;
  }
  return path.back();
}

TrackingStep pure_pursuit_step(const Pose2& pose, std::span<const Vec2> path, const TrackingParams& params) {
  if (path.empty()) throw NoPath("empty path");
  double s0 = 0.0;
  distance_to_path(path, pose.position(), &s0);

  auto aim = [&](double L, TrackingStep& st) {
    const Vec2 target = goal_point(path, pose.position(), s0, L);
    const Vec2 d = target - pose.position();
    st.lookahead = L;
    st.lookahead_point = target;
    st.delta_theta = d.squaredNorm() > 0.0 ? normalize_angle(std::atan2(d.y(), d.x()) - pose.theta) : 0.0;
    st.kappa = 2.0 * std::sin(st.delta_theta) / L;
  };

  // Speed from the heading error at the standstill lookahead, curvature from
  // the lookahead that speed implies.
  TrackingStep st;
  aim(std::clamp(params.L0, params.L_min, params.L_max), st);
  const VelocityCommand cmd = adaptive_velocity(st.delta_theta, params);
  if (cmd.v < params.v_stall || cmd.v <= 0.0) {
    st.v = 0.0;
    st.omega = st.delta_theta >= 0.0 ? params.turn_rate : -params.turn_rate;
    return st;
  }
  aim(cmd.lookahead, st);
  st.v = cmd.v;
  st.omega = st.v * st.kappa;
  return st;
}

Pose2 step_unicycle(const Pose2& pose, double v, double omega, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  Pose2 out = pose;
  if (std::abs(omega) < 1e-9) {
    out.x += v * dt * std::cos(pose.theta);
    out.y += v * dt * std::sin(pose.theta);
  } else {
    const double th1 = pose.theta + omega * dt;
    out.x += v / omega * (std::sin(th1) - std::sin(pose.theta));
    out.y -= v / omega * (std::cos(th1) - std::cos(pose.theta));
    out.theta = th1;
  }
  out.theta = normalize_angle(out.theta);
  return out;
}

}  // namespace mif
