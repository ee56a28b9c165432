#pragma once

#include <span>
#include <vector>

#include "mif/common.hpp"

namespace mif {

/// Static 3-d tree for exact nearest-neighbour lookups.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  /// Index of the nearest point (lowest index on exact ties); -1 when empty.
  int nearest(const Vec3& query, double* distance_sq = nullptr) const;
  std::size_t size() const { return points_.size(); }
  const Vec3& point(int i) const { return points_[i]; }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int first, int last, int depth);
  void search(int node, const Vec3& q, int& best, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mif
