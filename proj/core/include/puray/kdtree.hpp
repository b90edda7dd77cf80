#pragma once

#include <vector>

#include "puray/geometry.hpp"

namespace puray {

// Static 3D kd-tree. Results are defined to be bit-identical to an exhaustive
// scan that uses squared_distance(): candidates are ranked by (d2, index) and
// subtrees are pruned only when the axis gap is strictly greater than the
// current worst, which can never discard a point the scan would keep.
class KdTree {
 public:
  struct Hit {
    double d2 = 0.0;
    int index = -1;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Point3> points);

  // k best hits by (d2, index); fewer than k only if the cloud is smaller.
  // exclude_zero drops hits at exactly zero distance.
  void knn(const Point3& query, int k, bool exclude_zero, std::vector<Hit>& out) const;
  std::vector<Hit> knn(const Point3& query, int k, bool exclude_zero = false) const;
  Hit nearest(const Point3& query, bool exclude_zero = false) const;

  std::size_t size() const { return pts_.size(); }
  const std::vector<Point3>& points() const { return pts_; }

  // Fixed evaluation order; every distance in the library funnels through
  // this so kd-tree, exhaustive scan, and metrics agree bitwise.
  static double squared_distance(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
  }

 private:
  struct Node {
    double split = 0.0;
    int axis = 0;
    int left = -1;   // -1 marks a leaf
    int right = -1;
    int begin = 0;   // leaf range into order_
    int end = 0;
  };

  static constexpr int kLeafSize = 16;
  static constexpr std::size_t kBruteThreshold = 64;

  std::vector<Point3> pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;

  int build(int begin, int end);

  struct Best;
  void query_node(int node, const Point3& q, bool exclude_zero, Best& best) const;
};

// Indices of the k nearest cloud points to query, ascending (distance, index).
// exclude_self drops points coincident with query. Throws std::invalid_argument
// when fewer than k candidates remain.
std::vector<int> knn(const PointCloud& cloud, const Point3& query, int k,
                     bool exclude_self = false);

}  // namespace puray
