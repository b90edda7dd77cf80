#include "puray/upsampling.hpp"

#include <algorithm>
#include <stdexcept>

#include "puray/kdtree.hpp"
#include "puray/rng.hpp"
#include "puray/tape.hpp"

namespace puray {

Point3 emit_point(const QuerySample& qs, double t_hat) {
  return qs.patch.origin_world + (t_hat * qs.patch.scale) * qs.ray.direction;
}

UpsampleResult upsample(const PointCloud& S, ad::ParamStore& params, const NetConfig& net,
                        const UpsampleConfig& cfg) {
  if (S.empty()) throw std::invalid_argument("upsample: empty input cloud");
  if (cfg.mode == QueryMode::realscan && !cfg.sensor)
    throw std::invalid_argument("upsample: realscan mode requires a sensor position");

  UpsampleResult res;
  QueryPlan plan = cfg.mode == QueryMode::synthetic
                       ? gen_queries_synthetic(S, cfg.rate)
                       : gen_queries_realscan(S, *cfg.sensor, cfg.rate);
  res.sources_below_target = plan.sources_below_target;
  res.warning = plan.warning;
  res.cloud.points = S.points;
  res.cloud.sensor = S.sensor;
  res.cloud.name = S.name;
  if (plan.query_points.empty()) {
    if (!res.warning.empty()) res.warning += "; ";
    res.warning += "no queries generated, returning input unchanged";
    return res;
  }

  Rng origin_rng(cfg.seed, "origins");
  const std::size_t count_O = std::min<std::size_t>(static_cast<std::size_t>(cfg.origins),
                                                    S.size());
  const std::vector<Point3> origins =
      sample_ray_origins(S, count_O, origin_rng, net.k, cfg.origin_mode);
  KdTree tree(S.points);

  ad::Tape tape;
  std::vector<Point3> accepted;
  accepted.reserve(plan.query_points.size());
  for (const Point3& q : plan.query_points) {
    QuerySample qs;
    try {
      qs = build_query_sample(tree, q, origins, net.k, false);
    } catch (const std::domain_error&) {
      ++res.skipped;
      continue;
    }
    tape.reset();
    const double t_hat =
        tape.scalar(march_graph(tape, params, net, qs.patch, qs.ray.direction).t_hat);
    accepted.push_back(emit_point(qs, t_hat));
    ++res.emitted;
  }

  if (cfg.mode == QueryMode::realscan && !accepted.empty()) {
    PointCloud up;
    up.points = std::move(accepted);
    PointCloud kept = reject_outliers(up, S, cfg.reject_k, cfg.reject_tau);
    res.rejected = up.size() - kept.size();
    accepted = std::move(kept.points);
  }

  res.predicted = accepted;
  res.cloud.points.insert(res.cloud.points.end(), accepted.begin(), accepted.end());
  return res;
}

UpsampleResult upsample(const PointCloud& S, ad::ParamStore& params, const NetConfig& net,
                        double r, QueryMode mode, const std::optional<Point3>& sensor) {
  UpsampleConfig cfg;
  cfg.rate = r;
  cfg.mode = mode;
  cfg.sensor = sensor;
  return upsample(S, params, net, cfg);
}

}  // namespace puray
