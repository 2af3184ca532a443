#include "vservo/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace vservo {

KdTree::KdTree(std::span<const Vec3> points, int leaf_size)
    : points_(points.begin(), points.end()), index_(points.size()), leaf_size_(std::max(1, leaf_size)) {
  std::iota(index_.begin(), index_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / static_cast<std::size_t>(leaf_size_) + 1);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) {
    return id;
  }
  Vec3 lo = points_[begin];
  Vec3 hi = points_[begin];
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[i]);
    hi = hi.cwiseMax(points_[i]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) == lo(axis)) {
    return id;  // all points coincide
  }

  // Sort a permutation so points_ and index_ move together.
  std::vector<int> perm(end - begin);
  std::iota(perm.begin(), perm.end(), begin);
  const int mid = (end - begin) / 2;
  std::nth_element(perm.begin(), perm.begin() + mid, perm.end(),
                   [&](int a, int b) { return points_[a](axis) < points_[b](axis); });
  std::vector<Vec3> pts(perm.size());
  std::vector<std::size_t> idx(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    pts[k] = points_[perm[k]];
    idx[k] = index_[perm[k]];
  }
  std::copy(pts.begin(), pts.end(), points_.begin() + begin);
  std::copy(idx.begin(), idx.end(), index_.begin() + begin);

  const double split = points_[begin + mid](axis);
  const int left = build(begin, begin + mid);
  const int right = build(begin + mid, end);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(int id, const Vec3& q, double& best_d2, std::size_t& best) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const double d2 = (points_[i] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && index_[i] < best)) {
        best_d2 = d2;
        best = index_[i];
      }
    }
    return;
  }
  const double diff = q(n.axis) - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best_d2, best);
  if (diff * diff <= best_d2) {
    search(far, q, best_d2, best);
  }
}

std::size_t KdTree::nearest(const Vec3& query) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  if (!nodes_.empty()) {
    search(0, query, best_d2, best);
  }
  return best;
}

std::size_t nearest_linear(std::span<const Vec3> points, const Vec3& query) {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - query).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

}  // namespace vservo
