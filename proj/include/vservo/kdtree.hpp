#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vservo/types.hpp"

namespace vservo {

/// Static 3-d tree with bucket leaves.  nearest() is exact; equidistant
/// candidates resolve to the lowest original index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, int leaf_size = 8);

  std::size_t nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, double& best_d2, std::size_t& best) const;

  std::vector<Vec3> points_;          // reordered copy
  std::vector<std::size_t> index_;    // original index of points_[i]
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

/// Exhaustive nearest neighbour with the same tie rule; reference for KdTree.
std::size_t nearest_linear(std::span<const Vec3> points, const Vec3& query);

}  // namespace vservo
