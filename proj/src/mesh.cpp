#include "mif/mesh.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mif {

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::string read_file(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open mesh " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void validate_watertight(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
  if (triangles.empty()) throw TopologyError("mesh has no triangles");
  const int nv = static_cast<int>(vertices.size());
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(triangles.size() * 3);
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nv) {
        throw TopologyError("triangle " + std::to_string(t) + " references missing vertex");
      }
    }
    const Vec3& a = vertices[tri[0]];
    const Vec3& b = vertices[tri[1]];
    const Vec3& c = vertices[tri[2]];
    if (0.5 * (b - a).cross(c - a).norm() <= 1e-12) {
      throw TopologyError("triangle " + std::to_string(t) + " is degenerate");
    }
    for (int k = 0; k < 3; ++k) {
      const int u = tri[k];
      const int v = tri[(k + 1) % 3];
      if (++directed[edge_key(u, v)] > 1) {
        throw TopologyError("edge " + std::to_string(u) + "-" + std::to_string(v) +
                            " is used twice in the same direction (non-manifold or flipped winding)");
      }
    }
  }
  for (const auto& [key, count] : directed) {
    const int u = static_cast<int>(key >> 32);
    const int v = static_cast<int>(key & 0xffffffffu);
    if (!directed.count(edge_key(v, u))) {
      throw TopologyError("boundary edge " + std::to_string(u) + "-" + std::to_string(v) +
                          " (mesh is not watertight)");
    }
  }
}

bool is_watertight(const TriangleMesh& mesh) {
  try {
    validate_watertight(mesh.vertices(), mesh.triangles());
    return true;
  } catch (const TopologyError&) {
    return false;
  }
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  validate_watertight(vertices_, triangles_);
}

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles_[t];
  return 0.5 * (vertices_[tri[1]] - vertices_[tri[0]]).cross(vertices_[tri[2]] - vertices_[tri[0]]).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[1]] - vertices_[tri[0]])
      .cross(vertices_[tri[2]] - vertices_[tri[0]])
      .normalized();
}

double TriangleMesh::surface_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) a += triangle_area(t);
  return a;
}

double TriangleMesh::volume() const {
  double v = 0.0;
  for (const auto& tri : triangles_) {
    v += vertices_[tri[0]].dot(vertices_[tri[1]].cross(vertices_[tri[2]])) / 6.0;
  }
  return v;
}

Vec3 TriangleMesh::centroid() const {
  double v = 0.0;
  Vec3 c = Vec3::Zero();
  for (const auto& tri : triangles_) {
    const Vec3& a = vertices_[tri[0]];
    const Vec3& b = vertices_[tri[1]];
    const Vec3& d = vertices_[tri[2]];
    const double tv = a.dot(b.cross(d)) / 6.0;
    v += tv;
    c += tv * (a + b + d) / 4.0;
  }
  if (std::abs(v) < 1e-15) throw DegenerateGeometry("mesh encloses no volume");
  return c / v;
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& v : vertices_) box.extend(v);
  return box;
}

TriangleMesh TriangleMesh::transformed(const Mat3& rotation, const Vec3& translation,
                                       double scale) const {
  TriangleMesh out;
  out.triangles_ = triangles_;
  out.vertices_.reserve(vertices_.size());
  for (const auto& v : vertices_) out.vertices_.push_back(scale * (rotation * v) + translation);
  return out;
}

TriangleMesh merge_meshes(std::span<const TriangleMesh> meshes) {
  std::vector<Vec3> verts;
  std::vector<Triangle> tris;
  for (const auto& m : meshes) {
    const int base = static_cast<int>(verts.size());
    verts.insert(verts.end(), m.vertices().begin(), m.vertices().end());
    for (const auto& t : m.triangles()) tris.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh subdivide(const TriangleMesh& mesh, int levels) {
  std::vector<Vec3> verts = mesh.vertices();
  std::vector<Triangle> tris = mesh.triangles();
  for (int level = 0; level < levels; ++level) {
    std::unordered_map<std::uint64_t, int> mid;
    auto midpoint = [&](int a, int b) {
      const std::uint64_t key = a < b ? edge_key(a, b) : edge_key(b, a);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const int id = static_cast<int>(verts.size());
      verts.push_back(0.5 * (verts[a] + verts[b]));
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const int ab = midpoint(t[0], t[1]);
      const int bc = midpoint(t[1], t[2]);
      const int ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh make_box(double sx, double sy, double sz) {
  if (!(sx > 0 && sy > 0 && sz > 0)) throw DegenerateGeometry("box dimensions must be positive");
  const double x = 0.5 * sx;
  const double y = 0.5 * sy;
  std::vector<Vec3> v = {{-x, -y, 0}, {x, -y, 0}, {x, y, 0}, {-x, y, 0},
                         {-x, -y, sz}, {x, -y, sz}, {x, y, sz}, {-x, y, sz}};
  std::vector<Triangle> t = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                             {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  return TriangleMesh(std::move(v), std::move(t));
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
  if (!(radius > 0 && height > 0) || segments < 3) {
    throw DegenerateGeometry("cylinder needs positive radius/height and >= 3 segments");
  }
  std::vector<Vec3> v;
  std::vector<Triangle> t;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * kPi * i / segments;
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
  }
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * kPi * i / segments;
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), height);
  }
  const int bottom = static_cast<int>(v.size());
  v.emplace_back(0.0, 0.0, 0.0);
  const int top = static_cast<int>(v.size());
  v.emplace_back(0.0, 0.0, height);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    t.push_back({bottom, j, i});
    t.push_back({top, segments + i, segments + j});
    t.push_back({i, j, segments + j});
    t.push_back({i, segments + j, segments + i});
  }
  return TriangleMesh(std::move(v), std::move(t));
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::mt19937_64& rng) {
  std::vector<double> areas(mesh.triangle_count());
  for (std::size_t t = 0; t < areas.size(); ++t) areas[t] = mesh.triangle_area(t);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& tri = mesh.triangles()[pick(rng)];
    double r1 = u(rng);
    double r2 = u(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3& a = mesh.vertices()[tri[0]];
    out.push_back(a + r1 * (mesh.vertices()[tri[1]] - a) + r2 * (mesh.vertices()[tri[2]] - a));
  }
  return out;
}

TriangleMesh parse_obj(const std::string& text) {
  std::vector<Vec3> verts;
  std::vector<Triangle> tris;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError("obj line " + std::to_string(line_no) + ": bad vertex");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(verts.size()) + i);
      }
      if (idx.size() < 3) throw ParseError("obj line " + std::to_string(line_no) + ": face needs 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh load_obj(const std::string& path) { return parse_obj(read_file(path, false)); }

TriangleMesh parse_stl_binary(const std::string& bytes) {
  if (bytes.size() < 84) throw ParseError("stl: file shorter than header");
  std::uint32_t n = 0;
  std::memcpy(&n, bytes.data() + 80, 4);
  if (bytes.size() < 84 + static_cast<std::size_t>(n) * 50) throw ParseError("stl: truncated triangle data");
  std::vector<Vec3> verts;
  std::vector<Triangle> tris;
  std::map<std::array<float, 3>, int> weld;
  for (std::uint32_t t = 0; t < n; ++t) {
    const char* rec = bytes.data() + 84 + static_cast<std::size_t>(t) * 50;
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      std::array<float, 3> p{};
      std::memcpy(p.data(), rec + 12 + 12 * k, 12);
      auto [it, inserted] = weld.emplace(p, static_cast<int>(verts.size()));
      if (inserted) verts.emplace_back(p[0], p[1], p[2]);
      tri[k] = it->second;
    }
    tris.push_back(tri);
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

TriangleMesh load_stl(const std::string& path) { return parse_stl_binary(read_file(path, true)); }

TriangleMesh load_mesh(const std::string& path) {
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    if (path.size() < n) return false;
    std::string tail = path.substr(path.size() - n);
    std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
    return tail == ext;
  };
  if (ends_with(".obj")) return load_obj(path);
  if (ends_with(".stl")) return load_stl(path);
  throw ParseError("unsupported mesh format: " + path);
}

std::string to_obj(const TriangleMesh& mesh) {
  std::string s;
  for (const auto& v : mesh.vertices()) {
    s += "v " + format_sig9(v.x()) + " " + format_sig9(v.y()) + " " + format_sig9(v.z()) + "\n";
  }
  for (const auto& t : mesh.triangles()) {
    s += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " +
         std::to_string(t[2] + 1) + "\n";
  }
  return s;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Region classification (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

RayHit intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                              const Vec3& c) {
  constexpr double kBoundaryEps = 1e-9;
  RayHit h;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  const double scale = e1.norm() * e2.norm() * dir.norm();
  if (std::abs(det) <= 1e-14 * scale) return h;  // parallel: generic directions never graze
  const double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < -kBoundaryEps || u > 1.0 + kBoundaryEps) return h;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < -kBoundaryEps || u + v > 1.0 + kBoundaryEps) return h;
  const double t = e2.dot(qv) * inv;
  if (t <= 0.0) return h;
  h.hit = true;
  h.t = t;
  h.near_boundary = u < kBoundaryEps || v < kBoundaryEps || u + v > 1.0 - kBoundaryEps;
  return h;
}

std::span<const Vec3> parity_directions() {
  static const std::array<Vec3, 6> dirs = {
      Vec3(0.5773502691896258, 0.5773502691896258, 0.5773502691896258).normalized(),
      Vec3(0.2126019, -0.8461538, 0.4887218).normalized(),
      Vec3(-0.6180339887, 0.3247179572, 0.7159762834).normalized(),
      Vec3(0.9134837, 0.1237219, -0.3875461).normalized(),
      Vec3(-0.3017365, -0.5593120, -0.7721103).normalized(),
      Vec3(0.1414213, 0.9848077, -0.1010101).normalized(),
  };
  return dirs;
}

MeshDistance::MeshDistance(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  const int n = static_cast<int>(mesh_.triangle_count());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  tri_boxes_.resize(n);
  for (int t = 0; t < n; ++t) {
    const auto& tri = mesh_.triangles()[t];
    for (int k = 0; k < 3; ++k) tri_boxes_[t].extend(mesh_.vertices()[tri[k]]);
  }
  if (n > 0) {
    nodes_.reserve(2 * n);
    build(0, n);
  }
}

int MeshDistance::build(int first, int count) {
  const int idx = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centers;
  for (int i = first; i < first + count; ++i) {
    box.extend(tri_boxes_[order_[i]]);
    centers.extend(tri_boxes_[order_[i]].center());
  }
  nodes_[idx].box = box;
  if (count <= 4) {
    nodes_[idx].first = first;
    nodes_[idx].count = count;
    return idx;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int l, int r) {
                     const double cl = tri_boxes_[l].center()[axis];
                     const double cr = tri_boxes_[r].center()[axis];
                     return cl < cr || (cl == cr && l < r);
                   });
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[idx].left = left;
  nodes_[idx].right = right;
  return idx;
}

void MeshDistance::nearest(int node_idx, const Vec3& p, double& best_sq, Vec3& best_point) const {
  const Node& node = nodes_[node_idx];
  if (node.left < 0) {
    for (int i = node.first; i < node.first + node.count; ++i) {
      const auto& tri = mesh_.triangles()[order_[i]];
      const Vec3 q = closest_point_on_triangle(p, mesh_.vertices()[tri[0]], mesh_.vertices()[tri[1]],
                                               mesh_.vertices()[tri[2]]);
      const double d = (q - p).squaredNorm();
      if (d < best_sq) {
        best_sq = d;
        best_point = q;
      }
    }
    return;
  }
  const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
  const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
  const int first = dl <= dr ? node.left : node.right;
  const int second = dl <= dr ? node.right : node.left;
  const double d_first = std::min(dl, dr);
  const double d_second = std::max(dl, dr);
  if (d_first < best_sq) nearest(first, p, best_sq, best_point);
  if (d_second < best_sq) nearest(second, p, best_sq, best_point);
}

double MeshDistance::unsigned_distance(const Vec3& p, Vec3* closest) const {
  if (nodes_.empty()) throw TopologyError("distance query on empty mesh");
  double best_sq = std::numeric_limits<double>::infinity();
  Vec3 best = Vec3::Zero();
  nearest(0, p, best_sq, best);
  if (closest) *closest = best;
  return std::sqrt(best_sq);
}

namespace {

bool ray_hits_box(const Vec3& o, const Vec3& dir, const Eigen::AlignedBox3d& box,
                  double t_limit = std::numeric_limits<double>::infinity()) {
  double tmin = 0.0;
  double tmax = t_limit;
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (o[k] < box.min()[k] || o[k] > box.max()[k]) return false;
      continue;
    }
    double t1 = (box.min()[k] - o[k]) / dir[k];
    double t2 = (box.max()[k] - o[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return false;
  }
  return true;
}

}  // namespace

int MeshDistance::count_crossings(const Vec3& origin, const Vec3& dir, bool& unsafe) const {
  int crossings = 0;
  unsafe = false;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    const Node& node = nodes_[idx];
    if (!ray_hits_box(origin, dir, node.box)) continue;
    if (node.left >= 0) {
      stack.push_back(node.left);
      stack.push_back(node.right);
      continue;
    }
    for (int i = node.first; i < node.first + node.count; ++i) {
      const auto& tri = mesh_.triangles()[order_[i]];
      const RayHit h = intersect_ray_triangle(origin, dir, mesh_.vertices()[tri[0]],
                                              mesh_.vertices()[tri[1]], mesh_.vertices()[tri[2]]);
      if (!h.hit) continue;
      if (h.near_boundary) unsafe = true;
      ++crossings;
    }
  }
  return crossings;
}

bool MeshDistance::inside(const Vec3& p) const {
  int crossings = 0;
  for (const Vec3& dir : parity_directions()) {
    bool unsafe = false;
    crossings = count_crossings(p, dir, unsafe);
    if (!unsafe) break;
  }
  return crossings % 2 == 1;
}

double MeshDistance::signed_distance(const Vec3& p) const {
  const double d = unsigned_distance(p);
  if (d == 0.0) return 0.0;
  return inside(p) ? -d : d;
}

bool MeshDistance::segment_intersects(const Vec3& a, const Vec3& b) const {
  const Vec3 dir = b - a;
  const double len = dir.norm();
  if (len == 0.0) return false;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    const Node& node = nodes_[idx];
    if (!ray_hits_box(a, dir, node.box, 1.0)) continue;
    if (node.left >= 0) {
      stack.push_back(node.left);
      stack.push_back(node.right);
      continue;
    }
    for (int i = node.first; i < node.first + node.count; ++i) {
      const auto& tri = mesh_.triangles()[order_[i]];
      const RayHit h = intersect_ray_triangle(a, dir, mesh_.vertices()[tri[0]], mesh_.vertices()[tri[1]],
                                              mesh_.vertices()[tri[2]]);
      if (h.hit && h.t < 1.0) return true;
    }
  }
  return false;
}

double signed_distance(const Vec3& point, const TriangleMesh& mesh) {
  return MeshDistance(mesh).signed_distance(point);
}

}  // namespace mif
