#include "scenediff/spatial_index.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace scenediff {

namespace {

bool better(double d2, std::size_t idx, double best_d2, std::size_t best_idx) {
  return d2 < best_d2 || (d2 == best_d2 && idx < best_idx);
}

}  // namespace

KdTree::KdTree(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points), order_(points.size()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * (points_.size() / leaf_size_ + 1));
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];

  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

Neighbor KdTree::nearest(const Point3& query) const {
  if (points_.empty()) throw EmptyInputError("nearest neighbour query on an empty reference");
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  search_nearest(0, query, best_d2, best_index);
  return {best_index, std::sqrt(best_d2)};
}

Neighbor KdTree::nearest_squared(const Point3& query) const {
  if (points_.empty()) throw EmptyInputError("nearest neighbour query on an empty reference");
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  search_nearest(0, query, best_d2, best_index);
  return {best_index, best_d2};
}

void KdTree::search_nearest(std::size_t node_id, const Point3& q, double& best_d2,
                            std::size_t& best_index) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = squared_distance(q, points_[idx]);
      if (better(d2, idx, best_d2, best_index)) {
        best_d2 = d2;
        best_index = idx;
      }
    }
    return;
  }
  // Points equal to the split value may sit on either side, so the far side
  // is visited whenever the plane distance does not exceed the best (<=, not
  // <) to keep lowest-index tie-breaking exact.
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff < 0 ? node.left : node.right;
  const std::size_t far = diff < 0 ? node.right : node.left;
  search_nearest(near, q, best_d2, best_index);
  if (diff * diff <= best_d2) search_nearest(far, q, best_d2, best_index);
}

std::vector<Neighbor> KdTree::k_nearest(const Point3& query, std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> heap;
  if (k == 0 || points_.empty()) return {};
  heap.reserve(k + 1);
  search_knn(0, query, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back({idx, std::sqrt(d2)});
  return out;
}

void KdTree::search_knn(std::size_t node_id, const Point3& q, std::size_t k,
                        std::vector<std::pair<double, std::size_t>>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const std::pair<double, std::size_t> cand{squared_distance(q, points_[idx]), idx};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff < 0 ? node.left : node.right;
  const std::size_t far = diff < 0 ? node.right : node.left;
  search_knn(near, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().first) search_knn(far, q, k, heap);
}

}  // namespace scenediff
