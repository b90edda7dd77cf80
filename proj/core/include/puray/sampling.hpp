#pragma once

#include <span>
#include <vector>

#include "puray/geometry.hpp"
#include "puray/kdtree.hpp"
#include "puray/rng.hpp"

namespace puray {

// Greedy max-min selection; ties broken by lower index. Every prefix of the
// result is itself a valid FPS run from the same seed.
std::vector<int> farthest_point_sampling(const PointCloud& cloud, std::size_t n,
                                         std::size_t seed_index = 0);
std::vector<int> farthest_point_sampling(const std::vector<Point3>& pts, std::size_t n,
                                         std::size_t seed_index = 0);

// Eigendecomposition of the scatter matrix (N - mu)^T (N - mu), no 1/n factor.
// Eigenvalues ascending; tiny negatives clamped to zero; eigenvector signs
// fixed so the largest-magnitude component is positive.
EigenFrame covariance_eigen(std::span<const Point3> neighborhood);

enum class OriginMode {
  axis_aligned,  // per world axis, sqrt of the eigenvalue whose eigenvector dominates that axis
  eigen_frame,   // mu +- sum_i sqrt(lambda_i) * v_i
};

// FPS-downsample to count_O centers; for each, eigen-analyze its k-NN
// neighborhood (self included) and offset the mean by the square-rooted
// eigenvalues, one fair sign draw per origin.
std::vector<Point3> sample_ray_origins(const PointCloud& cloud, std::size_t count_O, Rng& rng,
                                       int k = 16, OriginMode mode = OriginMode::axis_aligned);

struct QuerySample {
  Ray ray;
  Patch patch;
};

// Origin = nearest member of origins (ties by index); direction toward the
// query; patch = k-NN of the query, translated by -origin and scaled so the
// farthest patch point sits on the unit sphere. exclude_query drops cloud
// points coincident with the query from the patch.
// Throws std::domain_error when the query coincides with its origin or the
// patch collapses onto the origin.
QuerySample build_query_sample(const KdTree& tree, const Point3& query,
                               const std::vector<Point3>& origins, int k,
                               bool exclude_query = false);
QuerySample build_query_sample(const PointCloud& cloud, const Point3& query,
                               const std::vector<Point3>& origins, int k,
                               bool exclude_query = false);

// Uniform rotation (quaternion method).
Mat3 random_rotation_matrix(Rng& rng);

// One random rotation applied jointly to patch points and ray direction, so
// all depths along the ray are preserved.
QuerySample random_rotation(const QuerySample& sample, Rng& rng);
QuerySample rotate_sample(const QuerySample& sample, const Mat3& rot);

// Adds gamma * N(0,1) to every coordinate. Callers normalize clouds first so
// gamma is comparable across models.
PointCloud gaussian_perturb(const PointCloud& cloud, double gamma, Rng& rng);

}  // namespace puray
