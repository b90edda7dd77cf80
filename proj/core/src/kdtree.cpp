#include "puray/kdtree.hpp"

#include <algorithm>
#include <stdexcept>

namespace puray {

namespace {

inline bool hit_less(const KdTree::Hit& a, const KdTree::Hit& b) {
  if (a.d2 != b.d2) return a.d2 < b.d2;
  return a.index < b.index;
}

}  // namespace

struct KdTree::Best {
  int k;
  std::vector<Hit>& out;  // kept sorted ascending by (d2, index)

  bool full() const { return static_cast<int>(out.size()) == k; }
  double worst_d2() const { return out.back().d2; }

  void offer(double d2, int index) {
    Hit h{d2, index};
    if (full()) {
      if (!hit_less(h, out.back())) return;
      out.pop_back();
    }
    out.insert(std::upper_bound(out.begin(), out.end(), h, hit_less), h);
  }
};

KdTree::KdTree(std::vector<Point3> points) : pts_(std::move(points)) {
  order_.resize(pts_.size());
  for (std::size_t i = 0; i < pts_.size(); ++i) order_[i] = static_cast<int>(i);
  if (pts_.size() >= kBruteThreshold) {
    nodes_.reserve(2 * pts_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(pts_.size()));
  }
}

int KdTree::build(int begin, int end) {
  Node nd;
  nd.begin = begin;
  nd.end = end;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
  }
  Point3 lo = pts_[order_[begin]];
  Point3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    const Point3& p = pts_[order_[i]];
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double ext[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
  int axis = 0;
  if (ext[1] > ext[axis]) axis = 1;
  if (ext[2] > ext[axis]) axis = 2;

  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double ca = pts_[a][axis], cb = pts_[b][axis];
                     if (ca != cb) return ca < cb;
                     return a < b;
                   });
  nd.axis = axis;
  nd.split = pts_[order_[mid]][axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(nd);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::query_node(int node, const Point3& q, bool exclude_zero, Best& best) const {
  const Node& nd = nodes_[node];
  if (nd.left < 0) {
    for (int i = nd.begin; i < nd.end; ++i) {
      const int pi = order_[i];
      const double d2 = squared_distance(pts_[pi], q);
      if (exclude_zero && d2 == 0.0) continue;
      best.offer(d2, pi);
    }
    return;
  }
  const double diff = q[nd.axis] - nd.split;
  const int near = diff < 0.0 ? nd.left : nd.right;
  const int far = diff < 0.0 ? nd.right : nd.left;
  query_node(near, q, exclude_zero, best);
  // Strict > only: a far-side point at exactly the current worst distance
  // could still win its index tie-break.
  if (!best.full() || !(diff * diff > best.worst_d2())) {
    query_node(far, q, exclude_zero, best);
  }
}

void KdTree::knn(const Point3& query, int k, bool exclude_zero, std::vector<Hit>& out) const {
  out.clear();
  if (k <= 0) return;
  Best best{k, out};
  if (root_ < 0) {
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const double d2 = squared_distance(pts_[i], query);
      if (exclude_zero && d2 == 0.0) continue;
      best.offer(d2, static_cast<int>(i));
    }
    return;
  }
  query_node(root_, query, exclude_zero, best);
}

std::vector<KdTree::Hit> KdTree::knn(const Point3& query, int k, bool exclude_zero) const {
  std::vector<Hit> out;
  knn(query, k, exclude_zero, out);
  return out;
}

KdTree::Hit KdTree::nearest(const Point3& query, bool exclude_zero) const {
  std::vector<Hit> out;
  knn(query, 1, exclude_zero, out);
  if (out.empty()) throw std::invalid_argument("KdTree::nearest: no candidate points");
  return out[0];
}

std::vector<int> knn(const PointCloud& cloud, const Point3& query, int k, bool exclude_self) {
  if (k <= 0) throw std::invalid_argument("knn: k must be positive");
  KdTree tree(cloud.points);
  std::vector<KdTree::Hit> hits = tree.knn(query, k, exclude_self);
  if (static_cast<int>(hits.size()) < k) {
    throw std::invalid_argument("knn: k exceeds number of available points");
  }
  std::vector<int> idx(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) idx[i] = hits[i].index;
  return idx;
}

}  // namespace puray
