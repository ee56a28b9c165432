#include "mif/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mif {

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int first, int last, int depth) {
  if (first >= last) return -1;
  const int axis = depth % 3;
  const int mid = first + (last - first) / 2;
  std::nth_element(idx.begin() + first, idx.begin() + mid, idx.begin() + last, [&](int a, int b) {
    const double pa = points_[a][axis];
    const double pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, first, mid, depth + 1);
  const int right = build(idx, mid + 1, last, depth + 1);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(int node_idx, const Vec3& q, int& best, double& best_sq) const {
  if (node_idx < 0) return;
  const Node& n = nodes_[node_idx];
  const double d = (points_[n.point] - q).squaredNorm();
  if (d < best_sq || (d == best_sq && n.point < best)) {
    best_sq = d;
    best = n.point;
  }
  const double diff = q[n.axis] - points_[n.point][n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_sq);
  if (diff * diff <= best_sq) search(far, q, best, best_sq);
}

int KdTree::nearest(const Vec3& query, double* distance_sq) const {
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_sq);
  if (distance_sq) *distance_sq = best_sq;
  return best;
}

}  // namespace mif
