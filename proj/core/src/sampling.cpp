#include "puray/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace puray {

std::vector<int> farthest_point_sampling(const std::vector<Point3>& pts, std::size_t n,
                                         std::size_t seed_index) {
  if (n < 1 || n > pts.size()) {
    throw std::invalid_argument("farthest_point_sampling: n out of range");
  }
  if (seed_index >= pts.size()) {
    throw std::invalid_argument("farthest_point_sampling: seed index out of range");
  }
  std::vector<int> selected;
  selected.reserve(n);
  selected.push_back(static_cast<int>(seed_index));
  std::vector<double> best_d2(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    best_d2[i] = KdTree::squared_distance(pts[i], pts[seed_index]);
  }
  while (selected.size() < n) {
    int next = -1;
    double far_d2 = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (best_d2[i] > far_d2) {
        far_d2 = best_d2[i];
        next = static_cast<int>(i);
      }
    }
    selected.push_back(next);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      best_d2[i] = std::min(best_d2[i], KdTree::squared_distance(pts[i], pts[next]));
    }
  }
  return selected;
}

std::vector<int> farthest_point_sampling(const PointCloud& cloud, std::size_t n,
                                         std::size_t seed_index) {
  return farthest_point_sampling(cloud.points, n, seed_index);
}

EigenFrame covariance_eigen(std::span<const Point3> neighborhood) {
  if (neighborhood.size() < 3) {
    throw std::invalid_argument("covariance_eigen: need at least 3 points");
  }
  Point3 mu;
  for (const Point3& p : neighborhood) mu += p;
  mu = mu / static_cast<double>(neighborhood.size());

  Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
  for (const Point3& p : neighborhood) {
    const Eigen::Vector3d d(p.x - mu.x, p.y - mu.y, p.z - mu.z);
    c += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(c);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("covariance_eigen: eigensolver failed");
  }

  EigenFrame frame;
  frame.mean = mu;
  for (int i = 0; i < 3; ++i) {
    double lambda = solver.eigenvalues()[i];
    if (lambda < 1e-12 && lambda > -1e-9) lambda = 0.0;
    if (lambda < 0.0) lambda = 0.0;
    frame.eigenvalues[i] = lambda;
    Eigen::Vector3d v = solver.eigenvectors().col(i);
    int dom = 0;
    for (int j = 1; j < 3; ++j) {
      if (std::abs(v[j]) > std::abs(v[dom])) dom = j;
    }
    if (v[dom] < 0.0) v = -v;
    frame.eigenvectors[i] = {v[0], v[1], v[2]};
  }
  return frame;
}

namespace {

// Assign each eigenvalue to the world axis its eigenvector dominates, so a
// flat neighborhood (normal along z) contributes zero offset along z. Brute
// force over the 6 axis permutations, maximizing total alignment; the first
// maximum in lexicographic permutation order wins.
std::array<int, 3> axis_assignment(const EigenFrame& frame) {
  std::array<int, 3> perm = {0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int i = 0; i < 3; ++i) score += std::abs(frame.eigenvectors[i][perm[i]]);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;  // best[i] = world axis of eigenvalue i
}

}  // namespace

std::vector<Point3> sample_ray_origins(const PointCloud& cloud, std::size_t count_O, Rng& rng,
                                       int k, OriginMode mode) {
  if (cloud.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("sample_ray_origins: cloud smaller than k");
  }
  if (cloud.size() < count_O) {
    throw std::invalid_argument("sample_ray_origins: cloud smaller than count_O");
  }
  const std::size_t seed_index = rng.index(cloud.size());
  const std::vector<int> centers = farthest_point_sampling(cloud.points, count_O, seed_index);

  KdTree tree(cloud.points);
  std::vector<Point3> origins;
  origins.reserve(count_O);
  std::vector<KdTree::Hit> hits;
  std::vector<Point3> nb;
  for (int ci : centers) {
    tree.knn(cloud.points[ci], k, /*exclude_zero=*/false, hits);
    nb.clear();
    for (const KdTree::Hit& h : hits) nb.push_back(cloud.points[h.index]);
    const EigenFrame frame = covariance_eigen(nb);
    const double sign = rng.coin_flip() ? 1.0 : -1.0;

    Vec3 offset;
    if (mode == OriginMode::axis_aligned) {
      const std::array<int, 3> axis_of = axis_assignment(frame);
      double comp[3] = {0.0, 0.0, 0.0};
      for (int i = 0; i < 3; ++i) comp[axis_of[i]] = std::sqrt(frame.eigenvalues[i]);
      offset = {comp[0], comp[1], comp[2]};
    } else {
      for (int i = 0; i < 3; ++i) {
        offset += frame.eigenvectors[i] * std::sqrt(frame.eigenvalues[i]);
      }
    }
    origins.push_back(frame.mean + offset * sign);
  }
  return origins;
}

QuerySample build_query_sample(const KdTree& tree, const Point3& query,
                               const std::vector<Point3>& origins, int k, bool exclude_query) {
  if (origins.empty()) throw std::invalid_argument("build_query_sample: no origins");

  int oi = 0;
  double best_d2 = KdTree::squared_distance(origins[0], query);
  for (std::size_t i = 1; i < origins.size(); ++i) {
    const double d2 = KdTree::squared_distance(origins[i], query);
    if (d2 < best_d2) {
      best_d2 = d2;
      oi = static_cast<int>(i);
    }
  }
  const Point3 origin = origins[oi];

  const Vec3 to_query = query - origin;
  const double dist = to_query.norm();
  if (dist == 0.0) throw std::domain_error("build_query_sample: query coincides with origin");

  std::vector<KdTree::Hit> hits = tree.knn(query, k, exclude_query);
  if (static_cast<int>(hits.size()) < k) {
    throw std::invalid_argument("build_query_sample: cloud smaller than k");
  }

  QuerySample qs;
  qs.ray.origin = origin;
  qs.ray.direction = to_query / dist;
  qs.patch.origin_world = origin;
  qs.patch.points.reserve(k);
  double max_norm = 0.0;
  for (const KdTree::Hit& h : hits) {
    const Vec3 rel = tree.points()[h.index] - origin;
    qs.patch.points.push_back(rel);
    max_norm = std::max(max_norm, rel.norm());
  }
  if (max_norm == 0.0) throw std::domain_error("build_query_sample: patch collapsed onto origin");
  qs.patch.scale = max_norm;
  for (Point3& p : qs.patch.points) p = p / max_norm;
  return qs;
}

QuerySample build_query_sample(const PointCloud& cloud, const Point3& query,
                               const std::vector<Point3>& origins, int k, bool exclude_query) {
  KdTree tree(cloud.points);
  return build_query_sample(tree, query, origins, k, exclude_query);
}

Mat3 random_rotation_matrix(Rng& rng) {
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& c : q) {
      c = rng.normal();
      n2 += c * c;
    }
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
  Mat3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

QuerySample rotate_sample(const QuerySample& sample, const Mat3& rot) {
  QuerySample out = sample;
  for (Point3& p : out.patch.points) p = rot.apply(p);
  out.ray.direction = rot.apply(out.ray.direction);
  return out;
}

QuerySample random_rotation(const QuerySample& sample, Rng& rng) {
  return rotate_sample(sample, random_rotation_matrix(rng));
}

PointCloud gaussian_perturb(const PointCloud& cloud, double gamma, Rng& rng) {
  if (gamma < 0.0) throw std::invalid_argument("gaussian_perturb: gamma must be >= 0");
  PointCloud out = cloud;
  for (Point3& p : out.points) {
    p.x += gamma * rng.normal();
    p.y += gamma * rng.normal();
    p.z += gamma * rng.normal();
  }
  return out;
}

}  // namespace puray
