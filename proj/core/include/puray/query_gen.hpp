#pragma once

#include <string>
#include <vector>

#include "puray/geometry.hpp"

namespace puray {

enum class QueryMode { synthetic, realscan };

struct QueryPlan {
  std::vector<Point3> query_points;
  QueryMode mode = QueryMode::synthetic;
  double rate = 2.0;
  // sources that could not reach the per-ring acceptance target
  std::size_t sources_below_target = 0;
  std::string warning;
};

// Accepted-neighbor directions per source point, exposed so the pairwise
// angle property can be asserted without re-deriving the walk.
struct SyntheticDiagnostics {
  std::vector<std::vector<int>> accepted;  // per source, neighbor indices in acceptance order
};

// Per source, walk neighbors nearest-first and accept those at angle >= pi/6
// to every previously accepted one, up to 6; emit midpoints, deduplicate
// exact duplicates, then trim (FPS) or augment (further ring of accepted
// neighbors) to exactly round(|S| * (r - 1)).
QueryPlan gen_queries_synthetic(const PointCloud& S, double r,
                                SyntheticDiagnostics* diag = nullptr);

// Per source, the 8 smallest sensor angles; keep neighbors strictly between
// the second nearest and second farthest of the 8; keep vectors strictly
// longer than the median length; emit N interior interpolants per vector with
// N = ceil(|V_hat| / (|S| * r)); trim to round(|S| * (r - 1)). May come up
// short (warning), never over.
QueryPlan gen_queries_realscan(const PointCloud& S, const Point3& sensor, double r);

// Drops upsampled points farther from their nearest input point than
// tau * (mean k-NN spacing of that input point).
PointCloud reject_outliers(const PointCloud& upsampled, const PointCloud& input, int k = 16,
                           double tau = 1.5);

}  // namespace puray
