#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "puray/geometry.hpp"
#include "puray/network.hpp"
#include "puray/param_store.hpp"
#include "puray/query_gen.hpp"
#include "puray/sampling.hpp"

namespace puray {

struct UpsampleConfig {
  double rate = 4.0;
  QueryMode mode = QueryMode::synthetic;
  int origins = 128;  // clamped to |S|
  std::uint64_t seed = 1;
  std::optional<Point3> sensor;  // required in realscan mode
  double reject_tau = 1.5;       // realscan spacing filter
  int reject_k = 16;
  OriginMode origin_mode = OriginMode::axis_aligned;
};

struct UpsampleResult {
  PointCloud cloud;              // input plus accepted predictions
  std::vector<Point3> predicted; // accepted predictions only
  std::size_t emitted = 0;       // rays marched to a depth
  std::size_t rejected = 0;      // dropped by the spacing filter
  std::size_t skipped = 0;       // queries with no valid ray sample
  std::size_t sources_below_target = 0;
  std::string warning;
};

// World-space point at normalized depth t_hat along the sample's ray.
Point3 emit_point(const QuerySample& qs, double t_hat);

UpsampleResult upsample(const PointCloud& S, ad::ParamStore& params, const NetConfig& net,
                        const UpsampleConfig& cfg);
UpsampleResult upsample(const PointCloud& S, ad::ParamStore& params, const NetConfig& net,
                        double r, QueryMode mode, const std::optional<Point3>& sensor = {});

}  // namespace puray
