#pragma once

// Exact k-d tree over 3D points with k-nearest-neighbor and fixed-radius
// queries. The tree is immutable after construction and stores original
// point indices; concurrent read queries are fine.
//
// Pruning uses per-node bounding boxes, which keeps both query types exact
// for duplicate and degenerate inputs. Radius queries use a closed ball
// (distance <= radius) and return ids in ascending order; knn sorts by
// (distance, id) so ties resolve to the lower id.

#include "posekit/geom.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace posekit {

class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("KdTree: empty point set");
    perm_.resize(points_.size());
    std::iota(perm_.begin(), perm_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(points_.size()));
  }

  explicit KdTree(std::span<const Vec3> points)
      : KdTree(std::vector<Vec3>(points.begin(), points.end())) {}

  std::size_t size() const { return points_.size(); }
  const Vec3& point(int id) const { return points_[static_cast<std::size_t>(id)]; }

  /// Ids of all points with ||p - query|| <= radius, ascending.
  std::vector<int> radius_search(const Vec3& query, double radius) const {
    if (radius < 0.0) throw std::invalid_argument("radius_search: negative radius");
    std::vector<int> out;
    radius_visit(root_, query, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// The k nearest ids, ascending by (distance, id).
  std::vector<int> knn(const Vec3& query, int k) const {
    if (k < 1 || static_cast<std::size_t>(k) > points_.size())
      throw std::invalid_argument("knn: k out of range");
    std::vector<Entry> heap;
    heap.reserve(static_cast<std::size_t>(k));
    knn_visit(root_, query, static_cast<std::size_t>(k), heap);
    std::sort(heap.begin(), heap.end(), EntryLess{});
    std::vector<int> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].id;
    return out;
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    Vec3 lo, hi;        // bounding box of the points below
    int left = -1;      // child node ids; -1 marks a leaf
    int right = -1;
    int begin = 0, end = 0;  // perm_ range (leaves only)
  };

  struct Entry {
    double d2;
    int id;
  };
  struct EntryLess {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.d2 != b.d2 ? a.d2 < b.d2 : a.id < b.id;
    }
  };

  int build(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
      const Vec3& p = points_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])];
      node.lo = node.lo.cwiseMin(p);
      node.hi = node.hi.cwiseMax(p);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[static_cast<std::size_t>(id)].begin = begin;
      nodes_[static_cast<std::size_t>(id)].end = end;
      return id;
    }
    int axis = 0;
    const Vec3 extent = node.hi - node.lo;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    const int mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                     [&](int a, int b) {
                       const double ca = points_[static_cast<std::size_t>(a)][axis];
                       const double cb = points_[static_cast<std::size_t>(b)][axis];
                       return ca != cb ? ca < cb : a < b;
                     });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  double box_dist2(const Node& n, const Vec3& q) const {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      double d = 0.0;
      if (q[a] < n.lo[a]) d = n.lo[a] - q[a];
      else if (q[a] > n.hi[a]) d = q[a] - n.hi[a];
      d2 += d * d;
    }
    return d2;
  }

  void radius_visit(int id, const Vec3& q, double r2, std::vector<int>& out) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (box_dist2(n, q) > r2) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int pid = perm_[static_cast<std::size_t>(i)];
        if ((points_[static_cast<std::size_t>(pid)] - q).squaredNorm() <= r2) out.push_back(pid);
      }
      return;
    }
    radius_visit(n.left, q, r2, out);
    radius_visit(n.right, q, r2, out);
  }

  void knn_visit(int id, const Vec3& q, std::size_t k, std::vector<Entry>& heap) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (heap.size() == k && box_dist2(n, q) > heap.front().d2) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int pid = perm_[static_cast<std::size_t>(i)];
        const Entry e{(points_[static_cast<std::size_t>(pid)] - q).squaredNorm(), pid};
        if (heap.size() < k) {
          heap.push_back(e);
          std::push_heap(heap.begin(), heap.end(), EntryLess{});
        } else if (EntryLess{}(e, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), EntryLess{});
          heap.back() = e;
          std::push_heap(heap.begin(), heap.end(), EntryLess{});
        }
      }
      return;
    }
    // Nearer child first improves pruning; correctness does not depend on it.
    const double dl = box_dist2(nodes_[static_cast<std::size_t>(n.left)], q);
    const double dr = box_dist2(nodes_[static_cast<std::size_t>(n.right)], q);
    if (dl <= dr) {
      knn_visit(n.left, q, k, heap);
      knn_visit(n.right, q, k, heap);
    } else {
      knn_visit(n.right, q, k, heap);
      knn_visit(n.left, q, k, heap);
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> perm_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

}  // namespace posekit
