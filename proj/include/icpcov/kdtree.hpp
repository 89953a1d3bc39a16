#pragma once

// Exact 3D kd-tree, median split, leaf size 16.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace icpcov {

class KdTree {
 public:
  explicit KdTree(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    if (points_.empty()) {
      throw std::invalid_argument("KdTree: empty point set");
    }
    indices_.resize(points_.size());
    std::iota(indices_.begin(), indices_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(points_.size()));
  }

  struct Result {
    int index = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  Result nearest(const Eigen::Vector3d& query) const {
    Result best;
    double best_sq = std::numeric_limits<double>::infinity();
    search(root_, query, best, best_sq);
    best.distance = std::sqrt(best_sq);
    return best;
  }

  // k nearest neighbors, sorted by increasing distance.
  std::vector<Result> knearest(const Eigen::Vector3d& query, int k) const {
    k = std::min<int>(k, static_cast<int>(points_.size()));
    std::vector<std::pair<double, int>> heap;  // max-heap on squared distance
    heap.reserve(k);
    search_knn(root_, query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Result> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) {
      out[i] = {heap[i].second, std::sqrt(heap[i].first)};
    }
    return out;
  }

  std::size_t size() const { return points_.size(); }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    int left = -1, right = -1;  // children, -1 for leaf
    int begin = 0, end = 0;     // index range for leaves
    int axis = 0;
    double split = 0.0;
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      return id;
    }
    Eigen::Vector3d lo = points_[indices_[begin]];
    Eigen::Vector3d hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end, [&](int a, int b) {
                       return points_[a](axis) < points_[b](axis);
                     });
    // capture the split value before the recursive builds repartition indices_
    const double split = points_[indices_[mid]](axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int id, const Eigen::Vector3d& q, Result& best, double& best_sq) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = indices_[i];
        const double d = (points_[idx] - q).squaredNorm();
        if (d < best_sq) {
          best_sq = d;
          best.index = idx;
        }
      }
      return;
    }
    const double delta = q(node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, best, best_sq);
    if (delta * delta < best_sq) {
      search(far, q, best, best_sq);
    }
  }

  void search_knn(int id, const Eigen::Vector3d& q, int k,
                  std::vector<std::pair<double, int>>& heap) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = indices_[i];
        const double d = (points_[idx] - q).squaredNorm();
        if (heap.size() < static_cast<std::size_t>(k)) {
          heap.emplace_back(d, idx);
          std::push_heap(heap.begin(), heap.end());
        } else if (d < heap.front().first) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = {d, idx};
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double delta = q(node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    if (heap.size() < static_cast<std::size_t>(k) || delta * delta < heap.front().first) {
      search_knn(far, q, k, heap);
    }
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

}  // namespace icpcov
