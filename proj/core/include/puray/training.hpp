#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "puray/adam.hpp"
#include "puray/losses.hpp"
#include "puray/network.hpp"
#include "puray/sampling.hpp"

namespace puray {

enum class TrainMode { supervised, selfsup };

struct TrainConfig {
  TrainMode mode = TrainMode::selfsup;
  NetConfig net;
  int epochs = 30;
  double lr0 = 0.005;
  double lr_decay = 0.99;
  LossWeights weights{0.5, 0.5};
  int origins = 128;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  bool include_query_in_patch = false;
  OriginMode origin_mode = OriginMode::axis_aligned;
};

struct TrainSample {
  QuerySample qs;
  double target;  // surface depth along the ray, in patch units
};

struct QuerySet {
  std::vector<TrainSample> samples;
  std::vector<Point3> origins;
  std::size_t skipped_coincident = 0;   // query fell on its ray origin
  std::size_t skipped_out_of_range = 0; // target beyond the unit patch radius
};

// One sample per ground-truth point, patches drawn from the sparse input.
QuerySet make_queries_supervised(const PointCloud& S, const PointCloud& GT,
                                 const std::vector<Point3>& origins, int k);
// One sample per input point; the query is excluded from its own patch unless
// include_query_in_patch is set.
QuerySet make_queries_selfsup(const PointCloud& S, const std::vector<Point3>& origins, int k,
                              bool include_query_in_patch = false);

struct EpochRow {
  int epoch;
  double lr;
  double l_mae, l_rmse, l_ms, l_tan, l_eps, total;
  double val_mae, val_rmse;  // NaN when the validation split is empty
};

// Header plus one row per entry; columns are fixed:
// epoch,lr,l_mae,l_rmse,l_ms,l_tan,l_eps,total,val_mae,val_rmse
std::string train_log_csv(const std::vector<EpochRow>& rows);

struct TrainResult {
  ad::ParamStore params;
  std::vector<EpochRow> log;  // row 0 is the pre-training evaluation
  bool aborted_nan = false;
  int last_epoch = 0;  // last completed epoch (0 = initial parameters)
};

// Called after every completed epoch with the current parameters and
// optimizer state; serialization is up to the caller.
using CheckpointHook =
    std::function<void(int epoch, const ad::ParamStore&, const ad::AdamState&)>;

// Adam on the marching losses. Batches of max(1, |samples|/64); a fresh
// random rotation per sample per epoch; 10% of samples held out (fixed
// sub-seed) and evaluated unaugmented. A non-finite batch loss aborts and
// restores the last completed epoch's parameters.
TrainResult train(const TrainConfig& cfg, const QuerySet& data,
                  const CheckpointHook& hook = {});

}  // namespace puray
