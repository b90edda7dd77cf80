#include "puray/query_gen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "puray/kdtree.hpp"
#include "puray/sampling.hpp"

namespace puray {

namespace {

const double kCosMinAngle = std::cos(M_PI / 6.0);

std::size_t target_count(std::size_t n, double r) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * (r - 1.0)));
}

// Nearest-first walk from source si accepting neighbors whose direction is at
// angle >= pi/6 from every previously accepted direction.
void walk_accept(const KdTree& tree, int si, std::size_t cap, std::vector<int>& accepted) {
  accepted.clear();
  const std::vector<Point3>& pts = tree.points();
  const Point3 s = pts[si];
  std::vector<Vec3> dirs;

  std::size_t request = std::min<std::size_t>(tree.size() - 1, std::max<std::size_t>(24, cap * 4));
  std::vector<KdTree::Hit> hits;
  std::size_t consumed = 0;
  while (true) {
    tree.knn(s, static_cast<int>(request), /*exclude_zero=*/true, hits);
    for (; consumed < hits.size() && accepted.size() < cap; ++consumed) {
      const int ni = hits[consumed].index;
      if (ni == si) continue;
      const Vec3 dir = (pts[ni] - s).normalized();
      bool ok = true;
      for (const Vec3& prev : dirs) {
        if (dir.dot(prev) > kCosMinAngle) {
          ok = false;
          break;
        }
      }
      if (ok) {
        accepted.push_back(ni);
        dirs.push_back(dir);
      }
    }
    if (accepted.size() >= cap || hits.size() >= tree.size() - 1 || hits.size() < request) break;
    request = std::min<std::size_t>(tree.size() - 1, request * 4);
  }
}

std::vector<Point3> fps_trim(const std::vector<Point3>& candidates, std::size_t n) {
  const std::vector<int> keep = farthest_point_sampling(candidates, n, /*seed_index=*/0);
  std::vector<Point3> out;
  out.reserve(n);
  for (int i : keep) out.push_back(candidates[i]);
  return out;
}

struct MidpointSet {
  std::vector<Point3> ordered;
  std::map<std::array<double, 3>, bool> seen;

  bool insert(const Point3& m) {
    auto [it, fresh] = seen.try_emplace({m.x, m.y, m.z}, true);
    if (fresh) ordered.push_back(m);
    return fresh;
  }
};

}  // namespace

QueryPlan gen_queries_synthetic(const PointCloud& S, double r, SyntheticDiagnostics* diag) {
  if (S.size() < 8) throw std::invalid_argument("gen_queries_synthetic: need at least 8 points");
  if (!(r > 1.0)) throw std::invalid_argument("gen_queries_synthetic: rate must exceed 1");

  QueryPlan plan;
  plan.mode = QueryMode::synthetic;
  plan.rate = r;
  const std::size_t needed = target_count(S.size(), r);
  if (needed == 0) {
    if (diag) diag->accepted.assign(S.size(), {});
    return plan;
  }

  KdTree tree(S.points);
  MidpointSet mids;
  std::vector<std::vector<int>> accepted(S.size());
  std::vector<int> walk;

  for (std::size_t si = 0; si < S.size(); ++si) {
    walk_accept(tree, static_cast<int>(si), 6, walk);
    accepted[si] = walk;
    if (walk.size() < 6) ++plan.sources_below_target;
    for (int ni : walk) mids.insert((S.points[si] + S.points[ni]) * 0.5);
  }

  // Widen the acceptance ring while short; each round re-walks with a higher
  // cap and emits only the newly accepted midpoints.
  for (std::size_t ring = 2; mids.ordered.size() < needed; ++ring) {
    bool grew = false;
    for (std::size_t si = 0; si < S.size() && mids.ordered.size() < needed; ++si) {
      walk_accept(tree, static_cast<int>(si), 6 * ring, walk);
      for (std::size_t j = accepted[si].size(); j < walk.size(); ++j) {
        if (mids.insert((S.points[si] + S.points[walk[j]]) * 0.5)) grew = true;
      }
      accepted[si] = walk;
    }
    if (!grew) break;
  }

  if (mids.ordered.size() > needed) {
    plan.query_points = fps_trim(mids.ordered, needed);
  } else {
    plan.query_points = std::move(mids.ordered);
    if (plan.query_points.size() < needed) {
      plan.warning = "synthetic plan exhausted midpoint candidates below the requested count";
    }
  }
  if (diag) diag->accepted = std::move(accepted);
  return plan;
}

QueryPlan gen_queries_realscan(const PointCloud& S, const Point3& sensor, double r) {
  if (S.size() < 16) throw std::invalid_argument("gen_queries_realscan: need at least 16 points");
  if (!(r > 1.0)) throw std::invalid_argument("gen_queries_realscan: rate must exceed 1");

  QueryPlan plan;
  plan.mode = QueryMode::realscan;
  plan.rate = r;
  const std::size_t needed = target_count(S.size(), r);
  if (needed == 0) return plan;
  const std::size_t n = S.size();

  struct Kept {
    int source;
    Vec3 v;
    double len;
  };
  std::vector<Kept> kept_all;

  struct AngleHit {
    double neg_cos;
    int index;
  };
  std::vector<AngleHit> ring;
  for (std::size_t si = 0; si < n; ++si) {
    const Vec3 u = S.points[si] - sensor;
    const double un = u.norm();
    if (un == 0.0) continue;  // source sits on the sensor, angle undefined

    ring.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == si) continue;
      const Vec3 w = S.points[j] - sensor;
      const double wn = w.norm();
      if (wn == 0.0) continue;
      ring.push_back({-(u.dot(w) / (un * wn)), static_cast<int>(j)});
    }
    if (ring.size() < 8) continue;
    std::partial_sort(ring.begin(), ring.begin() + 8, ring.end(), [](const AngleHit& a, const AngleHit& b) {
      if (a.neg_cos != b.neg_cos) return a.neg_cos < b.neg_cos;
      return a.index < b.index;
    });

    double len[8];
    for (int j = 0; j < 8; ++j) len[j] = (S.points[ring[j].index] - S.points[si]).norm();
    double sorted_len[8];
    std::copy(len, len + 8, sorted_len);
    std::sort(sorted_len, sorted_len + 8);
    const double d_near = sorted_len[1];
    const double d_far = sorted_len[6];

    for (int j = 0; j < 8; ++j) {
      if (len[j] > d_near && len[j] < d_far) {
        kept_all.push_back({static_cast<int>(si), S.points[ring[j].index] - S.points[si], len[j]});
      }
    }
  }

  if (kept_all.empty()) {
    plan.warning = "realscan plan found no candidate vectors";
    return plan;
  }

  std::vector<double> lens;
  lens.reserve(kept_all.size());
  for (const Kept& kv : kept_all) lens.push_back(kv.len);
  std::sort(lens.begin(), lens.end());
  const std::size_t m = lens.size();
  const double median =
      (m % 2 == 1) ? lens[m / 2] : 0.5 * (lens[m / 2 - 1] + lens[m / 2]);

  std::vector<Kept> kept;
  for (const Kept& kv : kept_all) {
    if (kv.len > median) kept.push_back(kv);
  }
  if (kept.empty()) {
    plan.warning = "realscan plan kept no vectors above the median length";
    return plan;
  }

  const std::size_t count_N = static_cast<std::size_t>(
      std::ceil(static_cast<double>(kept.size()) / (static_cast<double>(n) * r)));
  std::vector<Point3> emitted;
  emitted.reserve(kept.size() * count_N);
  for (const Kept& kv : kept) {
    for (std::size_t step = 1; step <= count_N; ++step) {
      const double t = static_cast<double>(step) / static_cast<double>(count_N + 1);
      emitted.push_back(S.points[kv.source] + kv.v * t);
    }
  }

  if (emitted.size() > needed) {
    plan.query_points = fps_trim(emitted, needed);
  } else {
    plan.query_points = std::move(emitted);
    if (plan.query_points.size() < needed) {
      plan.warning = "realscan plan below the requested count";
    }
  }
  return plan;
}

PointCloud reject_outliers(const PointCloud& upsampled, const PointCloud& input, int k,
                           double tau) {
  if (upsampled.empty() || input.empty()) {
    throw std::invalid_argument("reject_outliers: clouds must be non-empty");
  }
  KdTree tree(input.points);
  std::vector<double> spacing(input.size(), -1.0);
  std::vector<KdTree::Hit> hits;

  PointCloud out;
  out.name = upsampled.name;
  out.sensor = upsampled.sensor;
  for (const Point3& u : upsampled.points) {
    const KdTree::Hit near = tree.nearest(u);
    double& sp = spacing[near.index];
    if (sp < 0.0) {
      tree.knn(input.points[near.index], k, /*exclude_zero=*/true, hits);
      double sum = 0.0;
      for (const KdTree::Hit& h : hits) sum += std::sqrt(h.d2);
      sp = hits.empty() ? 0.0 : sum / static_cast<double>(hits.size());
    }
    if (sp == 0.0 || std::sqrt(near.d2) <= tau * sp) out.points.push_back(u);
  }
  return out;
}

}  // namespace puray
